#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "pagesum/error.hpp"
#include "pagesum/model.hpp"
#include "pagesum/ops.hpp"
#include "pagesum/paging.hpp"
#include "pagesum/rouge.hpp"
#include "pagesum/text.hpp"

namespace pagesum {

namespace detail {

// Runs f(0..n-1) across up to `threads` workers; index i goes to worker
// i % T, so any result vector indexed by i is filled deterministically.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    const std::size_t t = std::max<std::size_t>(1, std::min(threads, n));
    if (t == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t w = 0; w < t; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += t) f(i);
        });
    for (auto& th : pool) th.join();
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sentence embeddings and the locality curve
// ---------------------------------------------------------------------------

using SentenceEmbedder = std::function<std::vector<double>(const std::vector<int>&)>;

// Bag-of-words with smoothed inverse sentence frequency, L2-normalized.
// Sentences are the "documents" of the idf statistic.
class TfIdfEmbedder {
public:
    TfIdfEmbedder(const std::vector<SentenceDoc>& docs, std::size_t vocab_size) : idf_(vocab_size, 0.0) {
        std::size_t total = 0;
        std::vector<std::size_t> df(vocab_size, 0);
        for (const auto& d : docs)
            for (const auto& s : d.sentences) {
                ++total;
                std::vector<char> seen(vocab_size, 0);
                for (const int t : s)
                    if (t >= 0 && static_cast<std::size_t>(t) < vocab_size && !seen[t]) {
                        seen[t] = 1;
                        ++df[t];
                    }
            }
        for (std::size_t t = 0; t < vocab_size; ++t)
            idf_[t] = std::log((1.0 + static_cast<double>(total)) / (1.0 + static_cast<double>(df[t]))) + 1.0;
    }

    std::vector<double> operator()(const std::vector<int>& sentence) const {
        std::vector<double> v(idf_.size(), 0.0);
        for (const int t : sentence)
            if (t >= 0 && static_cast<std::size_t>(t) < idf_.size()) v[t] += idf_[t];
        double norm = 0;
        for (const double x : v) norm += x * x;
        if (norm > 0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        return v;
    }

private:
    std::vector<double> idf_;
};

struct LocalityCurve {
    std::vector<double> mean_sim;      // index d-1 holds distance d
    std::vector<std::size_t> count;
    double corpus_mean = 0.0;          // over all intra-document pairs, any distance
    std::size_t total_pairs = 0;
    std::size_t skipped = 0;           // pairs dropped for a zero-vector embedding
};

// Mean cosine similarity between sentence pairs at each index distance
// 1..max_distance, plus the all-pairs corpus mean. Documents are processed
// independently (optionally in parallel) and merged in document order.
inline LocalityCurve locality_curve(const std::vector<SentenceDoc>& docs, const SentenceEmbedder& embed,
                                    std::size_t max_distance, std::size_t threads = 1) {
    if (max_distance < 1) throw input_error("locality_curve: max_distance must be >= 1");

    struct Partial {
        std::vector<double> sum;
        std::vector<std::size_t> count;
        double all_sum = 0.0;
        std::size_t all_count = 0;
        std::size_t skipped = 0;
    };
    std::vector<Partial> parts(docs.size());

    detail::parallel_for(docs.size(), threads, [&](std::size_t di) {
        Partial p;
        p.sum.assign(max_distance, 0.0);
        p.count.assign(max_distance, 0);
        const auto& sents = docs[di].sentences;
        std::vector<std::vector<double>> emb(sents.size());
        std::vector<char> zero(sents.size(), 0);
        for (std::size_t i = 0; i < sents.size(); ++i) {
            emb[i] = embed(sents[i]);
            double n2 = 0;
            for (const double x : emb[i]) n2 += x * x;
            zero[i] = n2 == 0.0 ? 1 : 0;
        }
        for (std::size_t i = 0; i < sents.size(); ++i)
            for (std::size_t j = i + 1; j < sents.size(); ++j) {
                if (zero[i] || zero[j]) {
                    ++p.skipped;
                    continue;
                }
                const double c = detail::cosine(emb[i], emb[j]);
                const std::size_t d = j - i;
                if (d <= max_distance) {
                    p.sum[d - 1] += c;
                    ++p.count[d - 1];
                }
                p.all_sum += c;
                ++p.all_count;
            }
        parts[di] = std::move(p);
    });

    LocalityCurve curve;
    curve.mean_sim.assign(max_distance, 0.0);
    curve.count.assign(max_distance, 0);
    double all_sum = 0.0;
    for (const auto& p : parts) {
        for (std::size_t d = 0; d < max_distance; ++d) {
            curve.mean_sim[d] += p.sum[d];
            curve.count[d] += p.count[d];
        }
        all_sum += p.all_sum;
        curve.total_pairs += p.all_count;
        curve.skipped += p.skipped;
    }
    for (std::size_t d = 0; d < max_distance; ++d)
        if (curve.count[d] > 0) curve.mean_sim[d] /= static_cast<double>(curve.count[d]);
    if (curve.total_pairs > 0) curve.corpus_mean = all_sum / static_cast<double>(curve.total_pairs);
    return curve;
}

inline void write_locality_csv(std::ostream& os, const LocalityCurve& c) {
    os << "distance,mean_sim,count\n";
    char line[96];
    for (std::size_t d = 0; d < c.mean_sim.size(); ++d) {
        std::snprintf(line, sizeof(line), "%zu,%.6f,%zu", d + 1, c.mean_sim[d], c.count[d]);
        os << line << '\n';
    }
    std::snprintf(line, sizeof(line), "corpus,%.6f,%zu", c.corpus_mean, c.total_pairs);
    os << line << '\n';
}

// ---------------------------------------------------------------------------
// Page importance during teacher-forced decoding
// ---------------------------------------------------------------------------

struct ImportanceTrace {
    std::size_t pages = 0;
    std::vector<std::vector<double>> rows;  // [steps][pages], each row sums to 1
};

template <typename T>
ImportanceTrace importance_trace(const Model<T>& model, const PagedDocument& pd,
                                 const std::vector<int>& reference_summary) {
    NoGradGuard ng;
    std::vector<int> prefix = {BOS_ID};
    for (const int t : reference_summary) {
        if (prefix.size() + 1 > model.cfg.max_positions) break;
        prefix.push_back(t);
    }
    const auto r = model.forward(pd, prefix, DecodingMode::paged);
    const Tensor<T>& conf = r.fusion->confidence_norm;
    ImportanceTrace tr;
    tr.pages = conf.cols();
    tr.rows.assign(conf.rows(), std::vector<double>(conf.cols(), 0.0));
    for (std::size_t i = 0; i < conf.rows(); ++i)
        for (std::size_t j = 0; j < conf.cols(); ++j) tr.rows[i][j] = static_cast<double>(conf.at(i, j));
    return tr;
}

inline void write_importance_csv(std::ostream& os, const ImportanceTrace& tr) {
    os << "step";
    for (std::size_t j = 0; j < tr.pages; ++j) os << ",page_" << j;
    os << '\n';
    char cell[32];
    for (std::size_t i = 0; i < tr.rows.size(); ++i) {
        os << i;
        for (std::size_t j = 0; j < tr.pages; ++j) {
            std::snprintf(cell, sizeof(cell), ",%.6f", tr.rows[i][j]);
            os << cell;
        }
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// Semantic coherence (mean next-sentence probability)
// ---------------------------------------------------------------------------

using NextSentenceProb = std::function<double(const std::vector<int>& prev, const std::vector<int>& next)>;

// Stand-in scorer: logistic squashing of the bag-of-counts cosine between
// consecutive sentences. The coherence contract is the averaging, not this.
inline double overlap_next_sentence_prob(const std::vector<int>& prev, const std::vector<int>& next) {
    std::map<int, double> a, b;
    for (const int t : prev) a[t] += 1.0;
    for (const int t : next) b[t] += 1.0;
    double dot = 0, na = 0, nb = 0;
    for (const auto& [t, c] : a) na += c * c;
    for (const auto& [t, c] : b) nb += c * c;
    for (const auto& [t, c] : a) {
        const auto it = b.find(t);
        if (it != b.end()) dot += c * it->second;
    }
    const double cos = (na == 0 || nb == 0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
    return 1.0 / (1.0 + std::exp(-4.0 * (cos - 0.5)));
}

inline double semantic_coherence(const std::vector<std::vector<int>>& summary_sentences,
                                 const NextSentenceProb& p) {
    const std::size_t n = summary_sentences.size();
    if (n < 2) throw input_error("semantic_coherence: needs at least 2 sentences");
    double total = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
        const double v = p(summary_sentences[i - 1], summary_sentences[i]);
        if (!(v >= 0.0 && v <= 1.0))
            throw input_error("semantic_coherence: scorer returned " + std::to_string(v) + ", outside [0,1]");
        total += v;
    }
    return total / static_cast<double>(n - 1);
}

// ---------------------------------------------------------------------------
// Fusion-sentence interdependence mining
// ---------------------------------------------------------------------------

struct FusionPair {
    std::size_t summary_idx = 0;  // index of the fusion sentence in the summary
    std::size_t src_i = 0;        // source pair, src_i < src_j
    std::size_t src_j = 0;
    double pair_score = 0.0;      // 0-100 recall of concatenation against the summary sentence
    double score_i = 0.0;         // individual 0-100 recalls
    double score_j = 0.0;
    double norm_dist = 0.0;       // (src_j - src_i) / document sentence count
};

// For each summary sentence: exhaustively score every unordered source pair
// by recall of their in-order concatenation, take the argmax (ties to the
// smaller index pair), then keep it only if both members individually score
// above t1 and the pair beats each member by more than t2. Thresholds are on
// the 0-100 scale.
inline std::vector<FusionPair> find_fusion_pairs(const std::vector<std::vector<int>>& doc_sentences,
                                                 const std::vector<std::vector<int>>& summary_sentences,
                                                 double t1 = 20.0, double t2 = 10.0,
                                                 RougeVariant variant = RougeVariant::r1) {
    const std::size_t n = doc_sentences.size();
    if (n < 2) throw input_error("find_fusion_pairs: document needs at least 2 sentences");

    std::vector<FusionPair> out;
    for (std::size_t h = 0; h < summary_sentences.size(); ++h) {
        const auto& ref = summary_sentences[h];
        std::vector<double> solo(n);
        for (std::size_t i = 0; i < n; ++i)
            solo[i] = 100.0 * rouge_score(doc_sentences[i], ref, variant).recall;

        bool found = false;
        FusionPair best;
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                std::vector<int> concat = doc_sentences[i];
                concat.insert(concat.end(), doc_sentences[j].begin(), doc_sentences[j].end());
                const double s = 100.0 * rouge_score(concat, ref, variant).recall;
                if (!found || s > best.pair_score) {
                    found = true;
                    best.summary_idx = h;
                    best.src_i = i;
                    best.src_j = j;
                    best.pair_score = s;
                    best.score_i = solo[i];
                    best.score_j = solo[j];
                }
            }
        if (!found) continue;
        const bool rule1 = best.score_i > t1 && best.score_j > t1;
        const bool rule2 = best.pair_score - best.score_i > t2 && best.pair_score - best.score_j > t2;
        if (rule1 && rule2) {
            best.norm_dist = static_cast<double>(best.src_j - best.src_i) / static_cast<double>(n);
            out.push_back(best);
        }
    }
    return out;
}

struct FusionRow {
    std::string doc_id;
    FusionPair pair;
};

// Corpus-level mining; documents with fewer than 2 source sentences are
// skipped. Parallel per document, merged in document order.
inline std::vector<FusionRow> mine_fusion_corpus(const std::vector<SentenceDoc>& docs, double t1, double t2,
                                                 RougeVariant variant = RougeVariant::r1, std::size_t threads = 1) {
    std::vector<std::vector<FusionPair>> per_doc(docs.size());
    detail::parallel_for(docs.size(), threads, [&](std::size_t i) {
        if (docs[i].sentences.size() >= 2 && !docs[i].summary.empty())
            per_doc[i] = find_fusion_pairs(docs[i].sentences, docs[i].summary, t1, t2, variant);
    });
    std::vector<FusionRow> rows;
    for (std::size_t i = 0; i < docs.size(); ++i)
        for (const auto& p : per_doc[i]) rows.push_back({docs[i].id, p});
    return rows;
}

inline void write_fusion_csv(std::ostream& os, const std::vector<FusionRow>& rows) {
    os << "doc_id,summary_idx,src_i,src_j,score,gain,norm_dist\n";
    char line[160];
    for (const auto& r : rows) {
        const double gain = r.pair.pair_score - std::max(r.pair.score_i, r.pair.score_j);
        std::snprintf(line, sizeof(line), "%s,%zu,%zu,%zu,%.6f,%.6f,%.6f", r.doc_id.c_str(), r.pair.summary_idx,
                      r.pair.src_i, r.pair.src_j, r.pair.pair_score, gain, r.pair.norm_dist);
        os << line << '\n';
    }
}

// Ten equal buckets over normalized pair distance [0,1].
inline std::array<std::size_t, 10> distance_histogram(const std::vector<FusionRow>& rows) {
    std::array<std::size_t, 10> hist{};
    for (const auto& r : rows) {
        const double d = std::clamp(r.pair.norm_dist, 0.0, 1.0);
        hist[std::min<std::size_t>(9, static_cast<std::size_t>(d * 10.0))] += 1;
    }
    return hist;
}

// ---------------------------------------------------------------------------
// Attention-memory accounting
// ---------------------------------------------------------------------------

struct MemoryReport {
    std::size_t l_doc = 0;
    bool paged = true;                     // false: one full-length page
    std::size_t pages = 0;
    std::uint64_t entries = 0;             // measured encoder attention-score entries
    std::uint64_t bound = 0;               // page_size*l_doc (paged) or l_doc^2 (full)
    std::vector<std::uint64_t> per_call;   // one entry per attention invocation
};

struct MemoryBenchConfig {
    std::vector<std::size_t> lengths;      // document lengths l_D
    std::size_t page_size = 1024;
    std::size_t d_model = 8;
    std::size_t n_heads = 1;
    std::size_t n_layers = 1;
    bool run_paged = true;
    bool run_full = true;
    std::uint64_t seed = 0;
};

namespace detail {

template <typename T>
std::uint64_t metered_encode(const Model<T>& model, const std::vector<std::vector<int>>& pages,
                             std::vector<std::uint64_t>& per_call) {
    NoGradGuard ng;
    MeterScope scope;
    for (const auto& page : pages) (void)model.encode_page(page);
    per_call = scope.meter.per_call;
    return scope.meter.total;
}

}  // namespace detail

// Counts encoder self-attention score entries on synthetic documents, paged
// versus single-sequence, against the analytic bounds.
inline std::vector<MemoryReport> memory_bench(const MemoryBenchConfig& bc) {
    if (bc.lengths.empty()) throw input_error("memory_bench: no lengths given");
    for (const std::size_t l : bc.lengths)
        if (l < 1) throw input_error("memory_bench: lengths must be >= 1");

    std::vector<MemoryReport> reports;
    for (const std::size_t l_doc : bc.lengths) {
        ModelConfig mc;
        mc.vocab_size = 8;
        mc.d_model = bc.d_model;
        mc.n_heads = bc.n_heads;
        mc.n_encoder_layers = bc.n_layers;
        mc.n_decoder_layers = 1;
        mc.d_ff = bc.d_model * 2;
        mc.max_positions = std::max(l_doc, bc.page_size);
        Rng rng(bc.seed);
        const auto model = Model<float>::init(mc, rng);

        std::vector<int> tokens(l_doc);
        for (std::size_t i = 0; i < l_doc; ++i) tokens[i] = 5 + static_cast<int>(i % 3);

        auto run = [&](bool paged) {
            std::vector<std::vector<int>> pages;
            if (paged) {
                const std::size_t n_p = (l_doc + bc.page_size - 1) / bc.page_size;
                const std::size_t base = l_doc / n_p, rem = l_doc % n_p;
                std::size_t at = 0;
                for (std::size_t p = 0; p < n_p; ++p) {
                    const std::size_t take = base + (p < rem ? 1 : 0);
                    pages.emplace_back(tokens.begin() + at, tokens.begin() + at + take);
                    at += take;
                }
            } else {
                pages.push_back(tokens);
            }
            MemoryReport r;
            r.l_doc = l_doc;
            r.paged = paged;
            r.pages = pages.size();
            r.entries = detail::metered_encode(model, pages, r.per_call);
            r.bound = paged ? static_cast<std::uint64_t>(bc.page_size) * l_doc
                            : static_cast<std::uint64_t>(l_doc) * l_doc;
            reports.push_back(std::move(r));
        };
        if (bc.run_paged) run(true);
        if (bc.run_full) run(false);
    }
    return reports;
}

inline void write_memory_csv(std::ostream& os, const std::vector<MemoryReport>& reports) {
    os << "l_D,mode,entries,bound\n";
    for (const auto& r : reports)
        os << r.l_doc << ',' << (r.paged ? "paged" : "full") << ',' << r.entries << ',' << r.bound << '\n';
}

}  // namespace pagesum
