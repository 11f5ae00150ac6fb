#pragma once

#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagesum/error.hpp"
#include "pagesum/ops.hpp"
#include "pagesum/optim.hpp"
#include "pagesum/paging.hpp"
#include "pagesum/rng.hpp"
#include "pagesum/text.hpp"

namespace pagesum {

struct ModelConfig {
    std::size_t vocab_size = 64;
    std::size_t d_model = 16;
    std::size_t n_heads = 2;
    std::size_t n_encoder_layers = 2;
    std::size_t n_decoder_layers = 2;
    std::size_t d_ff = 32;
    std::size_t max_positions = 64;
    double dropout = 0.0;

    void check() const {
        if (vocab_size < 5) throw input_error("model: vocab_size must cover the reserved tokens (>= 5)");
        if (d_model < 1 || n_heads < 1 || d_ff < 1 || max_positions < 1)
            throw input_error("model: dimensions must be >= 1");
        if (d_model % n_heads != 0) throw input_error("model: d_model must be divisible by n_heads");
        if (n_encoder_layers < 1 || n_decoder_layers < 1) throw input_error("model: layer counts must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw input_error("model: dropout must be in [0,1)");
    }

    nlohmann::json to_json() const {
        return {{"vocab_size", vocab_size},   {"d_model", d_model},
                {"n_heads", n_heads},         {"n_encoder_layers", n_encoder_layers},
                {"n_decoder_layers", n_decoder_layers}, {"d_ff", d_ff},
                {"max_positions", max_positions}, {"dropout", dropout}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        try {
            c.vocab_size = j.at("vocab_size").get<std::size_t>();
            c.d_model = j.at("d_model").get<std::size_t>();
            c.n_heads = j.at("n_heads").get<std::size_t>();
            c.n_encoder_layers = j.at("n_encoder_layers").get<std::size_t>();
            c.n_decoder_layers = j.at("n_decoder_layers").get<std::size_t>();
            c.d_ff = j.at("d_ff").get<std::size_t>();
            c.max_positions = j.at("max_positions").get<std::size_t>();
            c.dropout = j.at("dropout").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw format_error(std::string("model config: ") + e.what());
        }
        c.check();
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

// The model cannot attend past its position table; page and summary caps
// must fit inside it.
inline void check_compat(const ModelConfig& mc, const PagingConfig& pc) {
    if (pc.page_size > mc.max_positions)
        throw input_error("page_size " + std::to_string(pc.page_size) + " exceeds model max_positions " +
                          std::to_string(mc.max_positions));
}

enum class DecodingMode { paged, global };

inline DecodingMode mode_from_string(const std::string& s) {
    if (s == "paged") return DecodingMode::paged;
    if (s == "global") return DecodingMode::global;
    throw input_error("unknown decoding mode '" + s + "' (expected paged or global)");
}

// Per-page encoder outputs, page order preserved.
template <typename T>
struct PageEncodings {
    std::vector<Tensor<T>> hidden;       // [page_len x d_model] each
    std::vector<std::size_t> lengths;    // page token counts
};

// Everything the fusion step consumes and produces for one decode pass.
template <typename T>
struct FusionState {
    std::vector<Tensor<T>> local_hidden;  // per page: [steps x d_model]
    Tensor<T> confidence_raw;             // [steps x n]
    Tensor<T> confidence_norm;            // [steps x n], rows sum to 1
    Tensor<T> fused;                      // [steps x d_model]
};

template <typename T>
struct ForwardResult {
    Tensor<T> logits;  // [steps x vocab]
    Tensor<T> probs;   // softmax of logits, rows sum to 1
    std::optional<FusionState<T>> fusion;  // paged mode only
};

// How a parameter starts: weight matrices from N(0, 0.02^2), biases and the
// page-confidence projection at zero (uniform initial page weights), norm
// gains at one.
enum class ParamInit { normal, zeros, ones };

struct ParamSpec {
    std::string name;
    Shape shape;
    ParamInit init;
};

template <typename T>
class Model {
public:
    ModelConfig cfg;
    ParamMap<T> params;

    // Canonical parameter list; names, shapes, creation order (which fixes
    // the RNG draw sequence), and checkpoint validation all derive from it.
    static std::vector<ParamSpec> parameter_inventory(const ModelConfig& cfg) {
        const auto V = cfg.vocab_size, d = cfg.d_model, ff = cfg.d_ff, P = cfg.max_positions;
        std::vector<ParamSpec> inv;
        auto norm = [&](const std::string& n, Shape s) { inv.push_back({n, std::move(s), ParamInit::normal}); };
        auto zero = [&](const std::string& n, Shape s) { inv.push_back({n, std::move(s), ParamInit::zeros}); };
        auto ln = [&](const std::string& b) {
            inv.push_back({b + ".g", {d}, ParamInit::ones});
            inv.push_back({b + ".b", {d}, ParamInit::zeros});
        };
        auto attn = [&](const std::string& b) {
            for (const char* w : {".wq", ".wk", ".wv", ".wo"}) norm(b + w, {d, d});
            for (const char* x : {".bq", ".bk", ".bv", ".bo"}) zero(b + x, {d});
        };
        auto ffn = [&](const std::string& b) {
            norm(b + ".w1", {d, ff});
            zero(b + ".b1", {ff});
            norm(b + ".w2", {ff, d});
            zero(b + ".b2", {d});
        };
        norm("embed.tok", {V, d});
        norm("embed.pos", {P, d});
        for (std::size_t i = 0; i < cfg.n_encoder_layers; ++i) {
            const std::string b = "enc." + std::to_string(i) + ".";
            ln(b + "ln1");
            attn(b + "attn");
            ln(b + "ln2");
            ffn(b + "ffn");
        }
        ln("enc.final_ln");
        for (std::size_t i = 0; i < cfg.n_decoder_layers; ++i) {
            const std::string b = "dec." + std::to_string(i) + ".";
            ln(b + "ln1");
            attn(b + "self");
            ln(b + "ln2");
            attn(b + "cross");
            ln(b + "ln3");
            ffn(b + "ffn");
        }
        ln("dec.final_ln");
        norm("vocab_proj.w", {d, V});
        zero("conf_proj.w", {d, 1});
        return inv;
    }

    static Model init(const ModelConfig& cfg, Rng& rng) {
        cfg.check();
        Model m;
        m.cfg = cfg;
        for (const ParamSpec& ps : parameter_inventory(cfg)) {
            std::vector<T> v(shape_numel(ps.shape), ps.init == ParamInit::ones ? T(1) : T(0));
            if (ps.init == ParamInit::normal)
                for (auto& x : v) x = static_cast<T>(rng.normal(0.0, 0.02));
            m.params.emplace(ps.name, Tensor<T>::from_data(ps.shape, std::move(v)));
        }
        return m;
    }

    const Tensor<T>& p(const std::string& name) const {
        const auto it = params.find(name);
        if (it == params.end()) throw input_error("model: missing parameter '" + name + "'");
        return it->second;
    }

    // --- Encoder -----------------------------------------------------------

    Tensor<T> encode_page(const std::vector<int>& tokens, Rng* drng = nullptr) const {
        if (tokens.empty()) throw input_error("encode_page: empty page");
        if (tokens.size() > cfg.max_positions)
            throw input_error("encode_page: page length " + std::to_string(tokens.size()) +
                              " exceeds max_positions " + std::to_string(cfg.max_positions));
        Tensor<T> x = embed(tokens, drng);
        for (std::size_t i = 0; i < cfg.n_encoder_layers; ++i) {
            const std::string b = "enc." + std::to_string(i) + ".";
            x = add(x, maybe_dropout(self_mha(b + "attn", layer_norm(x, p(b + "ln1.g"), p(b + "ln1.b")), nullptr),
                                     drng));
            x = add(x, maybe_dropout(ffn(b + "ffn", layer_norm(x, p(b + "ln2.g"), p(b + "ln2.b"))), drng));
        }
        return layer_norm(x, p("enc.final_ln.g"), p("enc.final_ln.b"));
    }

    PageEncodings<T> encode_pages(const PagedDocument& pd, Rng* drng = nullptr) const {
        if (pd.pages.empty()) throw input_error("encode_pages: document has no pages");
        PageEncodings<T> enc;
        for (const auto& page : pd.pages) {
            enc.hidden.push_back(encode_page(page.tokens, drng));
            enc.lengths.push_back(page.tokens.size());
        }
        return enc;
    }

    // --- Decoder -----------------------------------------------------------

    // One full decoder pass over `prefix` cross-attending to `enc_h`.
    // Returns final-layer hidden states after the closing normalization.
    Tensor<T> decode_pass(const std::vector<int>& prefix, const Tensor<T>& enc_h, Rng* drng = nullptr) const {
        check_prefix(prefix);
        const BoolMatrix causal = BoolMatrix::causal(prefix.size());
        Tensor<T> x = embed(prefix, drng);
        for (std::size_t i = 0; i < cfg.n_decoder_layers; ++i) {
            const std::string b = "dec." + std::to_string(i) + ".";
            x = add(x, maybe_dropout(self_mha(b + "self", layer_norm(x, p(b + "ln1.g"), p(b + "ln1.b")), &causal),
                                     drng));
            x = add(x, maybe_dropout(cross_mha(b + "cross", layer_norm(x, p(b + "ln2.g"), p(b + "ln2.b")), enc_h),
                                     drng));
            x = add(x, maybe_dropout(ffn(b + "ffn", layer_norm(x, p(b + "ln3.g"), p(b + "ln3.b"))), drng));
        }
        return layer_norm(x, p("dec.final_ln.g"), p("dec.final_ln.b"));
    }

    // Shared decoder run once per page; page j's pass cross-attends only to
    // page j's encoding. Confidence column j holds conf_proj applied to that
    // page's hidden states.
    FusionState<T> decode_local(const PageEncodings<T>& enc, const std::vector<int>& prefix,
                                Rng* drng = nullptr) const {
        if (enc.hidden.empty()) throw input_error("decode_local: no page encodings");
        FusionState<T> st;
        std::vector<Tensor<T>> conf_cols;
        for (const auto& h_page : enc.hidden) {
            Tensor<T> h = decode_pass(prefix, h_page, drng);
            conf_cols.push_back(matmul(h, p("conf_proj.w")));  // [steps x 1]
            st.local_hidden.push_back(std::move(h));
        }
        st.confidence_raw = concat_cols(conf_cols);
        return st;
    }

    // Normalizes confidence across pages per step and mixes the local hidden
    // states. With one page the softmax weight is exactly one and the fused
    // states equal that page's states bit for bit.
    static void fuse(FusionState<T>& st) {
        if (!st.confidence_raw.defined() || st.confidence_raw.numel() == 0)
            throw input_error("fuse: confidence scores not populated");
        st.confidence_norm = softmax(st.confidence_raw, 1);
        Tensor<T> acc;
        for (std::size_t j = 0; j < st.local_hidden.size(); ++j) {
            Tensor<T> term = mul_colvec(st.local_hidden[j], slice_cols(st.confidence_norm, j, j + 1));
            acc = j == 0 ? term : add(acc, term);
        }
        st.fused = std::move(acc);
    }

    Tensor<T> project_logits(const Tensor<T>& h) const { return matmul(h, p("vocab_proj.w")); }

    Tensor<T> project_vocab(const Tensor<T>& h) const { return softmax(project_logits(h), 1); }

    // Teacher-forced pass. `prefix` must start with BOS; row i of the result
    // is the model's distribution for the token following prefix[0..i].
    ForwardResult<T> forward(const PagedDocument& pd, const std::vector<int>& prefix, DecodingMode mode,
                             Rng* drng = nullptr) const {
        const PageEncodings<T> enc = encode_pages(pd, drng);
        return forward_encoded(enc, prefix, mode, drng);
    }

    ForwardResult<T> forward_encoded(const PageEncodings<T>& enc, const std::vector<int>& prefix, DecodingMode mode,
                                     Rng* drng = nullptr) const {
        ForwardResult<T> r;
        if (mode == DecodingMode::paged) {
            FusionState<T> st = decode_local(enc, prefix, drng);
            fuse(st);
            r.logits = project_logits(st.fused);
            r.fusion = std::move(st);
        } else {
            const Tensor<T> flat = enc.hidden.size() == 1 ? enc.hidden[0] : concat_rows(enc.hidden);
            r.logits = project_logits(decode_pass(prefix, flat, drng));
        }
        r.probs = softmax(r.logits, 1);
        return r;
    }

private:
    void check_prefix(const std::vector<int>& prefix) const {
        if (prefix.empty() || prefix[0] != BOS_ID)
            throw input_error("decoder prefix must begin with the start token");
        if (prefix.size() > cfg.max_positions)
            throw input_error("decoder prefix length " + std::to_string(prefix.size()) + " exceeds max_positions " +
                              std::to_string(cfg.max_positions));
    }

    // Token plus position table rows; positions restart at 0 per call.
    Tensor<T> embed(const std::vector<int>& ids, Rng* drng) const {
        std::vector<int> pos(ids.size());
        std::iota(pos.begin(), pos.end(), 0);
        Tensor<T> x = add(embedding(p("embed.tok"), ids), embedding(p("embed.pos"), pos));
        return maybe_dropout(x, drng);
    }

    Tensor<T> maybe_dropout(Tensor<T> x, Rng* drng) const {
        return drng != nullptr && cfg.dropout > 0.0 ? dropout(x, cfg.dropout, *drng) : x;
    }

    // Multi-head attention: per-head column slices of shared projections.
    Tensor<T> heads_attention(const std::string& base, const Tensor<T>& q_in, const Tensor<T>& kv_in,
                              const BoolMatrix* mask) const {
        const Tensor<T> q = add_rowvec(matmul(q_in, p(base + ".wq")), p(base + ".bq"));
        const Tensor<T> k = add_rowvec(matmul(kv_in, p(base + ".wk")), p(base + ".bk"));
        const Tensor<T> v = add_rowvec(matmul(kv_in, p(base + ".wv")), p(base + ".bv"));
        const std::size_t dh = cfg.d_model / cfg.n_heads;
        std::vector<Tensor<T>> heads;
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const std::size_t c0 = h * dh, c1 = c0 + dh;
            heads.push_back(attention(slice_cols(q, c0, c1), slice_cols(k, c0, c1), slice_cols(v, c0, c1), mask));
        }
        const Tensor<T> merged = cfg.n_heads == 1 ? heads[0] : concat_cols(heads);
        return add_rowvec(matmul(merged, p(base + ".wo")), p(base + ".bo"));
    }

    Tensor<T> self_mha(const std::string& base, const Tensor<T>& x, const BoolMatrix* mask) const {
        return heads_attention(base, x, x, mask);
    }
    Tensor<T> cross_mha(const std::string& base, const Tensor<T>& x, const Tensor<T>& enc_h) const {
        return heads_attention(base, x, enc_h, nullptr);
    }

    Tensor<T> ffn(const std::string& base, const Tensor<T>& x) const {
        const Tensor<T> h = gelu(add_rowvec(matmul(x, p(base + ".w1")), p(base + ".b1")));
        return add_rowvec(matmul(h, p(base + ".w2")), p(base + ".b2"));
    }
};

}  // namespace pagesum
