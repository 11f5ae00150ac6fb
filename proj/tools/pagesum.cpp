#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pagesum/analysis.hpp"
#include "pagesum/checkpoint.hpp"
#include "pagesum/corpus.hpp"
#include "pagesum/generate.hpp"
#include "pagesum/gradcheck.hpp"
#include "pagesum/training.hpp"

namespace {

using namespace pagesum;

std::uint64_t env_seed() {
    const char* s = std::getenv("PAGESUM_SEED");
    if (!s || !*s) return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw input_error(std::string("PAGESUM_SEED is not an integer: ") + s);
    return v;
}

struct Common {
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::string out;

    std::uint64_t effective_seed(std::uint64_t fallback = 0) const {
        if (seed) return *seed;
        if (std::getenv("PAGESUM_SEED")) return env_seed();
        return fallback;
    }
};

// Stdout unless --out was given.
class OutStream {
public:
    explicit OutStream(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw input_error("cannot open output file: " + path);
        }
    }
    std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::size_t> parse_length_list(const std::string& csv) {
    std::vector<std::size_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        char* end = nullptr;
        const unsigned long long v = std::strtoull(item.c_str(), &end, 10);
        if (end == item.c_str() || *end != '\0' || v == 0)
            throw input_error("bad length list entry: " + item);
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw input_error("empty length list");
    return out;
}

struct PagingFlags {
    std::string locality = "spatial";
    std::size_t page_size = 1024;
    std::size_t num_pages = 1;
    std::size_t max_tokens = 7168;

    void attach(CLI::App* cmd) {
        cmd->add_option("--locality", locality, "Page construction: spatial, discourse, or document");
        cmd->add_option("--page-size", page_size, "Maximum tokens per page");
        cmd->add_option("--num-pages", num_pages, "Page count for spatial splitting");
        cmd->add_option("--max-tokens", max_tokens, "Total source-token budget");
    }

    PagingConfig to_config() const {
        PagingConfig pc;
        pc.locality = locality_from_string(locality);
        pc.page_size = page_size;
        pc.num_pages = num_pages;
        pc.max_total_tokens = max_tokens;
        pc.check();
        return pc;
    }
};

// JSONL with at least {"id","summary"}; full corpus lines also qualify.
std::map<std::string, std::string> read_summaries(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw format_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string())
            throw format_error(path + ":" + std::to_string(lineno) + ": missing string field 'id'");
        if (!j.contains("summary") || !j["summary"].is_string())
            throw format_error(path + ":" + std::to_string(lineno) + ": missing string field 'summary'");
        const std::string id = j["id"].get<std::string>();
        if (out.count(id)) throw format_error(path + ":" + std::to_string(lineno) + ": duplicate id '" + id + "'");
        out[id] = j["summary"].get<std::string>();
    }
    return out;
}

Vocabulary vocab_from_corpus(const std::vector<RawDoc>& docs, std::size_t min_freq) {
    return build_vocabulary(docs, min_freq);
}

std::vector<SentenceDoc> encode_corpus(const std::vector<RawDoc>& docs, const Vocabulary& vocab) {
    std::vector<SentenceDoc> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(to_sentence_doc(d, vocab));
    return out;
}

// --- train ------------------------------------------------------------------

int cmd_train(const Common& common, const std::string& config_path, const std::string& corpus_path,
              const std::string& valid_path, const PagingFlags& pf, std::size_t min_freq,
              const std::vector<std::string>& cli_overrides) {
    nlohmann::json cfg_json = nlohmann::json::object();
    if (!config_path.empty()) {
        try {
            cfg_json = nlohmann::json::parse(slurp_file(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw format_error(config_path + ": " + e.what());
        }
        if (!cfg_json.is_object()) throw format_error(config_path + ": config must be a JSON object");
    }

    TrainConfig tc = TrainConfig::from_json(cfg_json);
    for (const auto& ov : cli_overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw input_error("--set expects key=value, got: " + ov);
        const std::string key = ov.substr(0, eq), val = ov.substr(eq + 1);
        nlohmann::json one;
        try {
            one[key] = nlohmann::json::parse(val);
        } catch (const nlohmann::json::exception&) {
            one[key] = val;  // bare strings allowed
        }
        tc = TrainConfig::from_json(one, tc);
    }
    if (common.seed || std::getenv("PAGESUM_SEED")) tc.seed = common.effective_seed();
    tc.check();

    ModelConfig mc;
    if (cfg_json.contains("model")) mc = ModelConfig::from_json(cfg_json["model"]);

    PagingConfig pc = pf.to_config();
    if (cfg_json.contains("paging")) {
        const auto& pj = cfg_json["paging"];
        if (pj.contains("locality")) pc.locality = locality_from_string(pj["locality"].get<std::string>());
        if (pj.contains("page_size")) pc.page_size = pj["page_size"].get<std::size_t>();
        if (pj.contains("num_pages")) pc.num_pages = pj["num_pages"].get<std::size_t>();
        if (pj.contains("max_total_tokens")) pc.max_total_tokens = pj["max_total_tokens"].get<std::size_t>();
        pc.check();
    }

    const auto train_raw = read_corpus_file(corpus_path);
    const auto valid_raw = read_corpus_file(valid_path);
    if (train_raw.empty()) throw input_error("training corpus is empty: " + corpus_path);
    if (valid_raw.empty()) throw input_error("validation corpus is empty: " + valid_path);

    Vocabulary vocab = vocab_from_corpus(train_raw, min_freq);
    mc.vocab_size = vocab.size();
    mc.check();
    check_compat(mc, pc);

    const auto train_docs = encode_corpus(train_raw, vocab);
    const auto valid_docs = encode_corpus(valid_raw, vocab);

    std::filesystem::create_directories(tc.checkpoint_dir);
    const std::string vocab_path = (std::filesystem::path(tc.checkpoint_dir) / "vocab.txt").string();
    vocab.save(vocab_path);

    Rng init_rng(tc.seed);
    auto model = Model<float>::init(mc, init_rng);

    OutStream out(common.out);
    const auto report = train(train_docs, valid_docs, model, pc, tc, &out.get());
    if (report.has_best) {
        char line[64];
        std::snprintf(line, sizeof(line), "done,best_valid_loss,%.6f", report.best_valid_loss);
        out.get() << line << '\n';
    } else {
        out.get() << "done,no_epochs\n";
    }
    std::cerr << "vocab: " << vocab_path << " (" << vocab.size() << " tokens)\n";
    return 0;
}

// --- summarize ---------------------------------------------------------------

int cmd_summarize(const Common& common, const std::string& ckpt_path, const std::string& vocab_path,
                  const std::string& corpus_path, const PagingFlags& pf, const std::string& mode_s,
                  const std::string& strategy_s, std::size_t beam_size, std::size_t max_len,
                  double length_penalty) {
    const auto loaded = load_checkpoint<float>(ckpt_path);
    Vocabulary vocab = Vocabulary::load_file(vocab_path);
    if (vocab.size() != loaded.model.cfg.vocab_size)
        throw input_error("vocabulary size " + std::to_string(vocab.size()) + " does not match checkpoint vocab_size " +
                          std::to_string(loaded.model.cfg.vocab_size));

    PagingConfig pc = pf.to_config();
    check_compat(loaded.model.cfg, pc);

    GenerateConfig gc;
    gc.mode = mode_from_string(mode_s);
    gc.strategy = strategy_from_string(strategy_s);
    gc.beam_size = beam_size;
    gc.max_len = std::min<std::size_t>(max_len, loaded.model.cfg.max_positions);
    gc.length_penalty = length_penalty;

    const auto raw = read_corpus_file(corpus_path);
    OutStream out(common.out);
    for (const auto& rd : raw) {
        const auto sd = to_sentence_doc(rd, vocab);
        const auto pd = split(sd, pc);
        const auto ids = generate(loaded.model, pd, gc);
        nlohmann::json j;
        j["id"] = sd.id;
        j["summary"] = vocab.decode(ids);
        out.get() << j.dump() << '\n';
    }
    return 0;
}

// --- eval-rouge ---------------------------------------------------------------

int cmd_eval_rouge(const Common& common, const std::string& hyp_path, const std::string& ref_path) {
    const auto hyps = read_summaries(hyp_path);
    const auto refs = read_summaries(ref_path);
    if (hyps.empty()) throw input_error("no hypotheses in " + hyp_path);

    double sums[3][3] = {};
    std::size_t n = 0;
    for (const auto& [id, hyp_text] : hyps) {
        const auto it = refs.find(id);
        if (it == refs.end()) throw input_error("hypothesis id '" + id + "' has no reference in " + ref_path);
        const auto hyp = tokenize_words(hyp_text);
        const auto ref = tokenize_words(it->second);
        const RougeScore scores[3] = {rouge_n(hyp, ref, 1), rouge_n(hyp, ref, 2), rouge_l(hyp, ref)};
        for (int m = 0; m < 3; ++m) {
            sums[m][0] += scores[m].precision;
            sums[m][1] += scores[m].recall;
            sums[m][2] += scores[m].f1;
        }
        ++n;
    }

    OutStream out(common.out);
    out.get() << "metric,precision,recall,f1\n";
    const char* names[3] = {"rouge-1", "rouge-2", "rouge-l"};
    char line[96];
    for (int m = 0; m < 3; ++m) {
        std::snprintf(line, sizeof(line), "%s,%.2f,%.2f,%.2f", names[m], 100.0 * sums[m][0] / n,
                      100.0 * sums[m][1] / n, 100.0 * sums[m][2] / n);
        out.get() << line << '\n';
    }
    return 0;
}

// --- analyze -----------------------------------------------------------------

SentenceEmbedder embedder_from_file(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open embeddings file: " + path);
    auto table = std::make_shared<std::map<std::string, std::vector<double>>>();
    std::string line;
    std::size_t lineno = 0, dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw format_error(path + ":" + std::to_string(lineno) + ": expected <sentence>\\t<values>");
        const std::string key = join_tokens(tokenize_words(line.substr(0, tab)));
        std::vector<double> vec;
        std::stringstream ss(line.substr(tab + 1));
        double v;
        while (ss >> v) vec.push_back(v);
        if (vec.empty()) throw format_error(path + ":" + std::to_string(lineno) + ": no vector values");
        if (dim == 0) dim = vec.size();
        if (vec.size() != dim)
            throw format_error(path + ":" + std::to_string(lineno) + ": dimension " +
                               std::to_string(vec.size()) + " != " + std::to_string(dim));
        (*table)[key] = std::move(vec);
    }
    if (table->empty()) throw input_error("embeddings file is empty: " + path);
    const std::size_t d = dim;
    // Unknown sentences map to the zero vector, which the curve skips and counts.
    return [table, d, &vocab](const std::vector<int>& sentence) {
        std::vector<std::string> toks;
        toks.reserve(sentence.size());
        for (const int id : sentence) toks.push_back(vocab.token_of(id));
        const auto it = table->find(join_tokens(toks));
        if (it == table->end()) return std::vector<double>(d, 0.0);
        return it->second;
    };
}

int cmd_analyze_locality(const Common& common, const std::string& corpus_path, std::size_t max_distance,
                         const std::string& embeddings_path, std::size_t min_freq) {
    const auto raw = read_corpus_file(corpus_path);
    if (raw.empty()) throw input_error("corpus is empty: " + corpus_path);
    const Vocabulary vocab = vocab_from_corpus(raw, min_freq);
    const auto docs = encode_corpus(raw, vocab);

    LocalityCurve curve;
    if (embeddings_path.empty()) {
        TfIdfEmbedder emb(docs, vocab.size());
        curve = locality_curve(docs, emb, max_distance, common.threads);
    } else {
        curve = locality_curve(docs, embedder_from_file(embeddings_path, vocab), max_distance, common.threads);
    }
    OutStream out(common.out);
    write_locality_csv(out.get(), curve);
    if (curve.skipped > 0) std::cerr << "skipped " << curve.skipped << " pairs with zero-vector embeddings\n";
    return 0;
}

int cmd_analyze_importance(const Common& common, const std::string& ckpt_path, const std::string& vocab_path,
                           const std::string& corpus_path, const std::string& doc_id, const PagingFlags& pf) {
    const auto loaded = load_checkpoint<float>(ckpt_path);
    const Vocabulary vocab = Vocabulary::load_file(vocab_path);
    if (vocab.size() != loaded.model.cfg.vocab_size)
        throw input_error("vocabulary size does not match checkpoint vocab_size");
    const auto raw = read_corpus_file(corpus_path);
    if (raw.empty()) throw input_error("corpus is empty: " + corpus_path);

    const RawDoc* chosen = &raw.front();
    if (!doc_id.empty()) {
        chosen = nullptr;
        for (const auto& d : raw)
            if (d.id == doc_id) {
                chosen = &d;
                break;
            }
        if (!chosen) throw input_error("document id not found in corpus: " + doc_id);
    }

    const auto sd = to_sentence_doc(*chosen, vocab);
    if (sd.summary.empty()) throw input_error("document '" + sd.id + "' has no summary to teacher-force");
    PagingConfig pc = pf.to_config();
    check_compat(loaded.model.cfg, pc);
    const auto pd = split(sd, pc);
    const auto trace = importance_trace(loaded.model, pd, sd.flat_summary());
    OutStream out(common.out);
    write_importance_csv(out.get(), trace);
    return 0;
}

int cmd_analyze_fusion(const Common& common, const std::string& corpus_path, double t1, double t2,
                       const std::string& variant_s, std::size_t min_freq, bool histogram) {
    const auto raw = read_corpus_file(corpus_path);
    if (raw.empty()) throw input_error("corpus is empty: " + corpus_path);
    const Vocabulary vocab = vocab_from_corpus(raw, min_freq);
    const auto docs = encode_corpus(raw, vocab);
    const auto rows = mine_fusion_corpus(docs, t1, t2, rouge_variant_from_string(variant_s), common.threads);

    OutStream out(common.out);
    if (histogram) {
        const auto hist = distance_histogram(rows);
        out.get() << "bucket_low,bucket_high,count\n";
        char line[64];
        for (std::size_t b = 0; b < hist.size(); ++b) {
            std::snprintf(line, sizeof(line), "%.1f,%.1f,%zu", 0.1 * b, 0.1 * (b + 1), hist[b]);
            out.get() << line << '\n';
        }
    } else {
        write_fusion_csv(out.get(), rows);
    }
    return 0;
}

int cmd_analyze_coherence(const Common& common, const std::string& corpus_path) {
    const auto raw = read_corpus_file(corpus_path);
    if (raw.empty()) throw input_error("corpus is empty: " + corpus_path);
    const Vocabulary vocab = vocab_from_corpus(raw, 1);
    const auto docs = encode_corpus(raw, vocab);

    OutStream out(common.out);
    out.get() << "doc_id,coherence\n";
    char line[96];
    double total = 0;
    std::size_t n = 0, skipped = 0;
    for (const auto& d : docs) {
        if (d.summary.size() < 2) {
            ++skipped;
            continue;
        }
        const double sc = semantic_coherence(d.summary, overlap_next_sentence_prob);
        std::snprintf(line, sizeof(line), "%s,%.6f", d.id.c_str(), sc);
        out.get() << line << '\n';
        total += sc;
        ++n;
    }
    if (n > 0) {
        std::snprintf(line, sizeof(line), "mean,%.6f", total / static_cast<double>(n));
        out.get() << line << '\n';
    }
    if (skipped > 0) std::cerr << "skipped " << skipped << " documents with fewer than 2 summary sentences\n";
    return 0;
}

// --- bench memory -------------------------------------------------------------

int cmd_bench_memory(const Common& common, const std::string& lengths_csv, std::size_t page_size,
                     const std::string& modes_csv, std::size_t d_model, std::size_t n_heads,
                     std::size_t n_layers) {
    MemoryBenchConfig bc;
    bc.lengths = parse_length_list(lengths_csv);
    bc.page_size = page_size;
    bc.d_model = d_model;
    bc.n_heads = n_heads;
    bc.n_layers = n_layers;
    bc.seed = common.effective_seed();
    bc.run_paged = bc.run_full = false;
    std::stringstream ss(modes_csv);
    std::string mode;
    while (std::getline(ss, mode, ',')) {
        if (mode == "paged")
            bc.run_paged = true;
        else if (mode == "full")
            bc.run_full = true;
        else if (!mode.empty())
            throw input_error("unknown bench mode: " + mode + " (expected paged or full)");
    }
    if (!bc.run_paged && !bc.run_full) throw input_error("no bench mode selected");

    const auto reports = memory_bench(bc);
    OutStream out(common.out);
    write_memory_csv(out.get(), reports);
    return 0;
}

// --- check grads ---------------------------------------------------------------

int cmd_check_grads(const Common& common, std::size_t samples, double eps, double tolerance) {
    ModelConfig mc;
    PagingConfig pc;
    pc.page_size = 8;
    pc.num_pages = 2;

    std::vector<SentenceDoc> docs(2);
    docs[0].id = "g0";
    docs[0].sentences = {{5, 6, 7, 8, 9}, {10, 11, 12}};
    docs[0].summary = {{13, 14, 15}};
    docs[1].id = "g1";
    docs[1].sentences = {{20, 21, 22, 23}, {24, 25, 26, 27}};
    docs[1].summary = {{28, 29}};

    Rng rng(common.effective_seed(17));
    auto model = Model<float>::init(mc, rng);

    auto loss_with = [&](auto& params) {
        using T = typename std::decay_t<decltype(params)>::mapped_type::value_type;
        Model<T> m;
        m.cfg = mc;
        m.params = params;
        Tensor<T> total;
        bool first = true;
        for (const auto& d : docs) {
            const auto pd = split(d, pc);
            std::vector<int> prefix, labels;
            detail::teacher_forcing_pair(d, mc.max_positions, prefix, labels);
            const auto r = m.forward(pd, prefix, DecodingMode::paged);
            const auto l = cross_entropy_smoothed(r.logits, labels, T(0.1));
            total = first ? l : add(total, l);
            first = false;
        }
        return total;
    };

    const auto rep = finite_diff_check(
        model.params, [&](ParamMap<float>& p) { return loss_with(p); },
        [&](ParamMap<double>& p) { return loss_with(p); }, samples, eps, common.effective_seed(17) + 1);

    OutStream out(common.out);
    out.get() << "tensor,error\n";
    char line[160];
    for (const auto& e : rep.entries) {
        std::snprintf(line, sizeof(line), "%s,%.3e", e.name.c_str(), e.err);
        out.get() << line << '\n';
    }
    std::snprintf(line, sizeof(line), "max,%.3e,%s", rep.max_err, rep.worst.c_str());
    out.get() << line << '\n';
    const bool pass = rep.max_err < tolerance;
    out.get() << "status," << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Locality-aware paged summarization toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all subcommand help");

    Common common;
    app.add_option("--seed", common.seed, "Random seed (fallback: PAGESUM_SEED, then 0)");
    app.add_option("--threads", common.threads, "Worker thread cap for per-document analyses")
        ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
    app.add_option("--out", common.out, "Write primary output to this file instead of standard output");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model on a JSONL corpus");
    train_cmd->fallthrough();
    std::string config_path, corpus_path, valid_path;
    std::size_t min_freq = 2;
    std::vector<std::string> overrides;
    PagingFlags train_pf;
    train_cmd->add_option("--config", config_path, "JSON config file");
    train_cmd->add_option("--corpus", corpus_path, "Training corpus JSONL")->required();
    train_cmd->add_option("--valid", valid_path, "Validation corpus JSONL")->required();
    train_cmd->add_option("--min-freq", min_freq, "Minimum token frequency for the vocabulary");
    train_cmd->add_option("--set", overrides, "Override a training config field, key=value (repeatable)");
    train_pf.attach(train_cmd);

    // summarize
    auto* sum_cmd = app.add_subcommand("summarize", "Generate summaries for a corpus");
    sum_cmd->fallthrough();
    std::string ckpt_path, vocab_path, sum_corpus, sum_mode = "paged", strategy = "greedy";
    std::size_t beam_size = 4, max_len = 64;
    double length_penalty = 1.0;
    PagingFlags sum_pf;
    sum_cmd->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
    sum_cmd->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    sum_cmd->add_option("--corpus", sum_corpus, "Corpus JSONL to summarize")->required();
    sum_cmd->add_option("--mode", sum_mode, "Decoding mode: paged or global");
    sum_cmd->add_option("--strategy", strategy, "Decoding strategy: greedy or beam");
    sum_cmd->add_option("--beam-size", beam_size, "Beam width for beam search");
    sum_cmd->add_option("--max-len", max_len, "Maximum generated tokens");
    sum_cmd->add_option("--length-penalty", length_penalty, "Beam length-normalization exponent");
    sum_pf.attach(sum_cmd);

    // eval-rouge
    auto* rouge_cmd = app.add_subcommand("eval-rouge", "Score hypothesis summaries against references");
    rouge_cmd->fallthrough();
    std::string hyp_path, ref_path;
    rouge_cmd->add_option("--hyp", hyp_path, "Hypothesis JSONL with id and summary")->required();
    rouge_cmd->add_option("--ref", ref_path, "Reference JSONL with id and summary")->required();

    // analyze
    auto* analyze_cmd = app.add_subcommand("analyze", "Corpus and model analyses");
    analyze_cmd->fallthrough();
    analyze_cmd->require_subcommand(1);

    auto* loc_cmd = analyze_cmd->add_subcommand("locality", "Sentence-similarity vs distance curve");
    loc_cmd->fallthrough();
    std::string loc_corpus, embeddings_path;
    std::size_t max_distance = 10, loc_min_freq = 1;
    loc_cmd->add_option("--corpus", loc_corpus, "Corpus JSONL")->required();
    loc_cmd->add_option("--max-distance", max_distance, "Largest index distance bucket");
    loc_cmd->add_option("--embeddings", embeddings_path, "Sentence-keyed vector file (tab-separated)");
    loc_cmd->add_option("--min-freq", loc_min_freq, "Minimum token frequency for the analysis vocabulary");

    auto* imp_cmd = analyze_cmd->add_subcommand("importance", "Per-page confidence during teacher forcing");
    imp_cmd->fallthrough();
    std::string imp_ckpt, imp_vocab, imp_corpus, imp_doc;
    PagingFlags imp_pf;
    imp_cmd->add_option("--checkpoint", imp_ckpt, "Model checkpoint")->required();
    imp_cmd->add_option("--vocab", imp_vocab, "Vocabulary file")->required();
    imp_cmd->add_option("--corpus", imp_corpus, "Corpus JSONL")->required();
    imp_cmd->add_option("--doc", imp_doc, "Document id (default: first document)");
    imp_pf.attach(imp_cmd);

    auto* fus_cmd = analyze_cmd->add_subcommand("fusion", "Mine fusion sentences and their source pairs");
    fus_cmd->fallthrough();
    std::string fus_corpus, rouge_variant = "rouge-1";
    double t1 = 20.0, t2 = 10.0;
    std::size_t fus_min_freq = 1;
    bool fus_hist = false;
    fus_cmd->add_option("--corpus", fus_corpus, "Corpus JSONL")->required();
    fus_cmd->add_option("--t1", t1, "Individual-score threshold, 0-100");
    fus_cmd->add_option("--t2", t2, "Pair-gain threshold, 0-100");
    fus_cmd->add_option("--rouge-variant", rouge_variant, "Scoring variant: rouge-1, rouge-2, or rouge-l");
    fus_cmd->add_option("--min-freq", fus_min_freq, "Minimum token frequency for the analysis vocabulary");
    fus_cmd->add_flag("--histogram", fus_hist, "Emit the normalized-distance histogram instead of pairs");

    auto* coh_cmd = analyze_cmd->add_subcommand("coherence", "Mean next-sentence probability of summaries");
    coh_cmd->fallthrough();
    std::string coh_corpus;
    coh_cmd->add_option("--corpus", coh_corpus, "Corpus JSONL")->required();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Resource accounting");
    bench_cmd->fallthrough();
    bench_cmd->require_subcommand(1);
    auto* mem_cmd = bench_cmd->add_subcommand("memory", "Attention-entry counts, paged vs full");
    mem_cmd->fallthrough();
    std::string lengths_csv, modes_csv = "paged,full";
    std::size_t bench_page = 1024, bench_d = 8, bench_heads = 1, bench_layers = 1;
    mem_cmd->add_option("--lengths", lengths_csv, "Comma-separated document lengths")->required();
    mem_cmd->add_option("--page-size", bench_page, "Page size for paged mode");
    mem_cmd->add_option("--mode", modes_csv, "Comma-separated subset of paged,full");
    mem_cmd->add_option("--d-model", bench_d, "Bench model width");
    mem_cmd->add_option("--heads", bench_heads, "Bench attention heads");
    mem_cmd->add_option("--layers", bench_layers, "Bench encoder layers");

    // check
    auto* check_cmd = app.add_subcommand("check", "Self-checks");
    check_cmd->fallthrough();
    check_cmd->require_subcommand(1);
    auto* grads_cmd = check_cmd->add_subcommand("grads", "Finite-difference gradient verification");
    grads_cmd->fallthrough();
    std::size_t gc_samples = 3;
    double gc_eps = 1e-3, gc_tol = 1e-3;
    grads_cmd->add_option("--samples", gc_samples, "Coordinates sampled per tensor");
    grads_cmd->add_option("--eps", gc_eps, "Finite-difference step");
    grads_cmd->add_option("--tolerance", gc_tol, "Maximum allowed relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        std::cerr << app.help() << '\n';
        return 1;
    }

    try {
        if (*train_cmd)
            return cmd_train(common, config_path, corpus_path, valid_path, train_pf, min_freq, overrides);
        if (*sum_cmd)
            return cmd_summarize(common, ckpt_path, vocab_path, sum_corpus, sum_pf, sum_mode, strategy,
                                 beam_size, max_len, length_penalty);
        if (*rouge_cmd) return cmd_eval_rouge(common, hyp_path, ref_path);
        if (*loc_cmd) return cmd_analyze_locality(common, loc_corpus, max_distance, embeddings_path, loc_min_freq);
        if (*imp_cmd) return cmd_analyze_importance(common, imp_ckpt, imp_vocab, imp_corpus, imp_doc, imp_pf);
        if (*fus_cmd) return cmd_analyze_fusion(common, fus_corpus, t1, t2, rouge_variant, fus_min_freq, fus_hist);
        if (*coh_cmd) return cmd_analyze_coherence(common, coh_corpus);
        if (*mem_cmd)
            return cmd_bench_memory(common, lengths_csv, bench_page, modes_csv, bench_d, bench_heads,
                                    bench_layers);
        if (*grads_cmd) return cmd_check_grads(common, gc_samples, gc_eps, gc_tol);
        std::cerr << "error: no subcommand selected\n";
        return 1;
    } catch (const numeric_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
