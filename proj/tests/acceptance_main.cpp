// Acceptance suite: one self-contained check per guarantee the library makes,
// each printed as a single PASS or FAIL line. Exits 3 if anything fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pagesum/analysis.hpp"
#include "pagesum/generate.hpp"
#include "pagesum/gradcheck.hpp"
#include "pagesum/model.hpp"
#include "pagesum/optim.hpp"
#include "pagesum/paging.hpp"
#include "pagesum/rng.hpp"
#include "pagesum/rouge.hpp"
#include "pagesum/training.hpp"
#include "synthetic.hpp"

using namespace pagesum;

namespace {

int failed = 0;

void criterion(const char* name, const std::function<bool(std::string&)>& body) {
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ok) {
        std::printf("PASS  %-58s (%.1fs)\n", name, secs);
    } else {
        ++failed;
        std::printf("FAIL  %-58s (%.1fs)%s%s\n", name, secs, detail.empty() ? "" : ": ", detail.c_str());
    }
    std::fflush(stdout);
}

ModelConfig tiny_config() {
    ModelConfig mc;
    mc.vocab_size = 32;
    mc.d_model = 8;
    mc.n_heads = 2;
    mc.n_encoder_layers = 1;
    mc.n_decoder_layers = 1;
    mc.d_ff = 16;
    mc.max_positions = 32;
    return mc;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
    return a.numel() == b.numel() &&
           std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

// exhaustive longest common subsequence: try every subsequence of `a`
std::size_t brute_lcs(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::vector<int> sub;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (mask & (1u << i)) sub.push_back(a[i]);
        std::size_t at = 0;
        for (const int x : b) {
            if (at < sub.size() && sub[at] == x) ++at;
        }
        if (at == sub.size()) best = std::max(best, sub.size());
    }
    return best;
}

// unigram/bigram recall on the 0-100 scale, written independently
double recall100(const std::vector<int>& hyp, const std::vector<int>& ref, std::size_t n) {
    auto grams = [&](const std::vector<int>& seq) {
        std::map<std::vector<int>, int> c;
        if (seq.size() >= n)
            for (std::size_t i = 0; i + n <= seq.size(); ++i)
                c[std::vector<int>(seq.begin() + i, seq.begin() + i + n)]++;
        return c;
    };
    auto rc = grams(ref), hc = grams(hyp);
    double total = 0, want = 0;
    for (const auto& [g, c] : rc) {
        total += c;
        const auto it = hc.find(g);
        if (it != hc.end()) want += std::min(c, it->second);
    }
    if (total == 0) return 0.0;
    return 100.0 * (want / total);
}

// exhaustive fusion-pair reference sharing only the stated contract
std::vector<FusionPair> reference_pairs(const std::vector<std::vector<int>>& sents,
                                        const std::vector<std::vector<int>>& summary, double t1, double t2) {
    std::vector<FusionPair> out;
    const std::size_t n = sents.size();
    for (std::size_t h = 0; h < summary.size(); ++h) {
        FusionPair best;
        bool found = false;
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                std::vector<int> cat = sents[i];
                cat.insert(cat.end(), sents[j].begin(), sents[j].end());
                const double s = recall100(cat, summary[h], 1);
                if (!found || s > best.pair_score) {
                    found = true;
                    best = FusionPair{h,
                                      i,
                                      j,
                                      s,
                                      recall100(sents[i], summary[h], 1),
                                      recall100(sents[j], summary[h], 1),
                                      0.0};
                }
            }
        if (found && best.score_i > t1 && best.score_j > t1 && best.pair_score - best.score_i > t2 &&
            best.pair_score - best.score_j > t2) {
            best.norm_dist = static_cast<double>(best.src_j - best.src_i) / static_cast<double>(n);
            out.push_back(best);
        }
    }
    return out;
}

}  // namespace

int main() {
    criterion("gradients match finite differences on the full model", [](std::string& detail) {
        const auto t0 = std::chrono::steady_clock::now();
        ModelConfig mc;
        PagingConfig pc;
        pc.page_size = 8;
        pc.num_pages = 2;
        Rng rng(17);
        auto model = Model<float>::init(mc, rng);
        const auto rep = finite_diff_check(
            model.params, [&](ParamMap<float>& p) { return synthetic::gradcheck_loss(mc, pc, p); },
            [&](ParamMap<double>& p) { return synthetic::gradcheck_loss(mc, pc, p); }, 3, 1e-3, 18);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[128];
        std::snprintf(buf, sizeof(buf), "max rel err %.3e at %s in %.1fs", rep.max_err, rep.worst.c_str(), secs);
        detail = buf;
        return rep.max_err < 1e-3 && secs < 60.0;
    });

    criterion("single-page paged decoding equals global decoding", [](std::string& detail) {
        const auto mc = tiny_config();
        Rng rng(3);
        auto model = Model<float>::init(mc, rng);
        for (auto& v : model.params.at("conf_proj.w").data_mut()) v = static_cast<float>(rng.normal(0.0, 0.5));

        PagingConfig pc;
        pc.page_size = 32;
        pc.num_pages = 1;
        Rng draw(101);
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            SentenceDoc d;
            d.id = "kl_" + std::to_string(trial);
            const std::size_t n_sent = 1 + draw.below(3);
            for (std::size_t s = 0; s < n_sent; ++s) {
                std::vector<int> sent;
                const std::size_t len = 2 + draw.below(4);
                for (std::size_t k = 0; k < len; ++k) sent.push_back(5 + static_cast<int>(draw.below(27)));
                d.sentences.push_back(std::move(sent));
            }
            const auto pd = split(d, pc);
            if (pd.pages.size() != 1) return false;

            std::vector<int> prefix = {BOS_ID};
            const std::size_t extra = draw.below(7);
            for (std::size_t k = 0; k < extra; ++k) prefix.push_back(5 + static_cast<int>(draw.below(27)));

            NoGradGuard ng;
            const auto paged = model.forward(pd, prefix, DecodingMode::paged);
            const auto global = model.forward(pd, prefix, DecodingMode::global);
            for (std::size_t i = 0; i < paged.probs.shape()[0]; ++i) {
                double kl = 0.0;
                for (std::size_t j = 0; j < paged.probs.shape()[1]; ++j) {
                    const double p = paged.probs.at(i, j), q = global.probs.at(i, j);
                    kl += p * (std::log(p) - std::log(q));
                }
                worst = std::max(worst, std::abs(kl));
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "max per-step divergence %.3e", worst);
        detail = buf;
        return worst < 1e-10;
    });

    criterion("confidence weights form a distribution at every step", [](std::string& detail) {
        const auto mc = tiny_config();
        Rng rng(7);
        auto model = Model<float>::init(mc, rng);
        for (auto& v : model.params.at("conf_proj.w").data_mut()) v = static_cast<float>(rng.normal(0.0, 0.5));

        SentenceDoc d;
        d.id = "conf";
        d.sentences = {{5, 6, 7, 8}, {9, 10, 11}, {12, 13, 14, 15}, {16, 17}, {18, 19, 20}};
        PagingConfig pc;
        pc.page_size = 8;
        pc.num_pages = 3;
        const auto pd = split(d, pc);
        if (pd.pages.size() != 3) return false;

        NoGradGuard ng;
        Rng draw(202);
        std::size_t rows = 0;
        double worst = 0.0;
        while (rows < 1000) {
            std::vector<int> prefix = {BOS_ID};
            const std::size_t extra = draw.below(10);
            for (std::size_t k = 0; k < extra; ++k) prefix.push_back(5 + static_cast<int>(draw.below(27)));
            const auto r = model.forward(pd, prefix, DecodingMode::paged);
            const auto& cn = r.fusion->confidence_norm;
            for (std::size_t i = 0; i < cn.shape()[0]; ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < cn.shape()[1]; ++j) sum += cn.at(i, j);
                worst = std::max(worst, std::abs(sum - 1.0));
                ++rows;
            }
        }
        char buf[80];
        std::snprintf(buf, sizeof(buf), "%zu steps, worst |sum-1| = %.3e", rows, worst);
        detail = buf;
        return worst <= 1e-6;
    });

    criterion("pages encode independently of one another", [](std::string& detail) {
        const auto mc = tiny_config();
        Rng rng(9);
        auto model = Model<float>::init(mc, rng);
        for (auto& v : model.params.at("conf_proj.w").data_mut()) v = static_cast<float>(rng.normal(0.0, 0.5));

        SentenceDoc a, b;
        a.id = b.id = "pind";
        a.sentences = {{5, 6, 7}, {8, 9, 10}, {11, 12, 13}};
        b.sentences = {{5, 6, 7}, {8, 9, 21}, {11, 12, 13}};
        PagingConfig pc;
        pc.page_size = 4;
        pc.num_pages = 3;
        const auto pa = split(a, pc), pb = split(b, pc);
        if (pa.pages.size() != 3 || pb.pages.size() != 3) return false;

        NoGradGuard ng;
        const std::vector<int> prefix = {BOS_ID, 5, 9};
        const auto ra = model.forward(pa, prefix, DecodingMode::paged);
        const auto rb = model.forward(pb, prefix, DecodingMode::paged);
        const auto& fa = *ra.fusion;
        const auto& fb = *rb.fusion;

        bool ok = same_bits(fa.local_hidden[0], fb.local_hidden[0]) &&
                  same_bits(fa.local_hidden[2], fb.local_hidden[2]) &&
                  !same_bits(fa.local_hidden[1], fb.local_hidden[1]);
        for (std::size_t i = 0; ok && i < fa.confidence_raw.shape()[0]; ++i) {
            ok = fa.confidence_raw.at(i, 0) == fb.confidence_raw.at(i, 0) &&
                 fa.confidence_raw.at(i, 2) == fb.confidence_raw.at(i, 2);
        }
        detail = ok ? "untouched pages bitwise identical" : "bitwise difference on an untouched page";
        return ok;
    });

    criterion("paged attention memory stays within page_size * doc_length", [](std::string& detail) {
        const auto t0 = std::chrono::steady_clock::now();
        MemoryBenchConfig bc;
        bc.lengths = {1024, 2048, 4096, 8192};
        bc.page_size = 1024;
        const auto reports = memory_bench(bc);

        bool ok = true;
        std::map<std::size_t, std::uint64_t> paged_entries, full_entries;
        for (const auto& r : reports) {
            std::uint64_t per_call_sum = 0;
            for (const auto c : r.per_call) per_call_sum += c;
            ok = ok && per_call_sum == r.entries;
            if (r.paged) {
                ok = ok && r.entries <= r.bound && r.bound == std::uint64_t{1024} * r.l_doc;
                paged_entries[r.l_doc] = r.entries;
            } else {
                ok = ok && r.entries == std::uint64_t(r.l_doc) * r.l_doc;
                full_entries[r.l_doc] = r.entries;
            }
        }
        // at exact multiples of the page size the ratio is the page count
        for (const auto l : bc.lengths)
            ok = ok && full_entries[l] == paged_entries[l] * (l / bc.page_size) &&
                 paged_entries[l] == std::uint64_t{1024} * l;

        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[96];
        std::snprintf(buf, sizeof(buf), "entries paged/full at 8192: %llu/%llu in %.1fs",
                      static_cast<unsigned long long>(paged_entries[8192]),
                      static_cast<unsigned long long>(full_entries[8192]), secs);
        detail = buf;
        return ok && secs < 120.0;
    });

    criterion("tiny model memorizes ten synthetic pairs", [](std::string& detail) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto docs = synthetic::overfit_corpus(42);
        ModelConfig mc;
        PagingConfig pc;
        pc.page_size = 8;
        pc.num_pages = 2;
        TrainConfig tc;
        tc.epochs = 200;
        tc.base_lr = 2e-2;
        tc.warmup = 100;
        tc.label_smoothing = 0.0;
        tc.seed = 11;
        tc.checkpoint_dir = (std::filesystem::temp_directory_path() / "pgsm_accept_ckpt").string();
        std::filesystem::remove_all(tc.checkpoint_dir);
        Rng rng(5);
        auto model = Model<float>::init(mc, rng);
        const auto rep = train(docs, docs, model, pc, tc, nullptr);
        std::filesystem::remove_all(tc.checkpoint_dir);

        const double loss = evaluate_loss(docs, model, pc, 0.0, DecodingMode::paged);
        int exact = 0;
        GenerateConfig gc;
        gc.max_len = 8;
        for (const auto& d : docs) {
            const auto out = generate(model, split(d, pc), gc);
            if (out == d.flat_summary()) ++exact;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[110];
        std::snprintf(buf, sizeof(buf), "%zu steps, mean token loss %.4f, %d/10 exact, %.1fs", rep.steps.size(),
                      loss, exact, secs);
        detail = buf;
        return rep.steps.size() <= 2000 && loss < 0.1 && exact >= 9 && secs < 600.0;
    });

    criterion("subsequence overlap matches exhaustive enumeration", [](std::string& detail) {
        Rng rng(55);
        for (int trial = 0; trial < 1000; ++trial) {
            auto draw = [&] {
                std::vector<int> s(1 + rng.below(8));
                for (auto& x : s) x = 5 + static_cast<int>(rng.below(3));
                return s;
            };
            const auto hyp = draw(), ref = draw();
            const auto got = rouge_l(hyp, ref);
            const double lcs = static_cast<double>(brute_lcs(hyp, ref));
            const double p = lcs / static_cast<double>(hyp.size());
            const double r = lcs / static_cast<double>(ref.size());
            const double f = p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
            if (got.precision != p || got.recall != r || got.f1 != f) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "mismatch at trial %d", trial);
                detail = buf;
                return false;
            }
        }
        detail = "1000 random pairs, token alphabet of 3, exact agreement";
        return true;
    });

    criterion("fusion-pair mining agrees with an exhaustive reference", [](std::string& detail) {
        Rng rng(4242);
        std::size_t kept = 0;
        for (int trial = 0; trial < 200; ++trial) {
            const auto d = synthetic::fusion_doc(rng, 8);
            const auto got = find_fusion_pairs(d.sentences, d.summary, 20.0, 10.0, RougeVariant::r1);
            const auto want = reference_pairs(d.sentences, d.summary, 20.0, 10.0);
            if (got.size() != want.size()) {
                detail = "pair count mismatch at trial " + std::to_string(trial);
                return false;
            }
            for (std::size_t k = 0; k < got.size(); ++k) {
                const auto& g = got[k];
                const auto& w = want[k];
                if (g.summary_idx != w.summary_idx || g.src_i != w.src_i || g.src_j != w.src_j ||
                    std::abs(g.pair_score - w.pair_score) > 1e-9 || std::abs(g.score_i - w.score_i) > 1e-9 ||
                    std::abs(g.score_j - w.score_j) > 1e-9 || std::abs(g.norm_dist - w.norm_dist) > 1e-9) {
                    detail = "selection mismatch at trial " + std::to_string(trial);
                    return false;
                }
            }
            kept += got.size();
        }
        detail = "200 random documents, " + std::to_string(kept) + " pairs kept, exact agreement";
        return kept > 0;
    });

    criterion("sentence similarity decays with distance", [](std::string& detail) {
        const auto lc = synthetic::locality_corpus(3, 16, 8, 1);
        TfIdfEmbedder emb(lc.docs, lc.vocab_size);
        const auto curve = locality_curve(lc.docs, emb, 5);

        bool ok = true;
        for (std::size_t d = 1; d < 5; ++d) ok = ok && curve.mean_sim[d] < curve.mean_sim[d - 1];
        const double want = lc.expected_corpus_mean();
        const double rel = std::abs(curve.corpus_mean - want) / want;
        char buf[110];
        std::snprintf(buf, sizeof(buf), "mean at d=1..5 decreasing, corpus mean %.4f vs analytic %.4f (%.2f%%)",
                      curve.corpus_mean, want, 100.0 * rel);
        detail = buf;
        return ok && rel < 0.05;
    });

    criterion("learning-rate schedule hits its warmup knee exactly", [](std::string& detail) {
        const double got = lr_at(10000, 10000, 2e-3);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "lr_at(10000, 10000, 2e-3) = %.12g", got);
        detail = buf;
        return got == 2e-5;
    });

    if (failed > 0) {
        std::printf("%d criterion(s) failed\n", failed);
        return 3;
    }
    std::printf("all criteria passed\n");
    return 0;
}
