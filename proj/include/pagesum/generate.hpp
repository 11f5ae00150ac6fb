#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pagesum/model.hpp"

namespace pagesum {

enum class Strategy { greedy, beam };

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "greedy") return Strategy::greedy;
    if (s == "beam") return Strategy::beam;
    throw input_error("unknown strategy '" + s + "' (expected greedy or beam)");
}

struct GenerateConfig {
    Strategy strategy = Strategy::greedy;
    std::size_t beam_size = 4;
    std::size_t max_len = 32;           // generated tokens, EOS included
    double length_penalty = 1.0;        // score = logp / len^penalty
    DecodingMode mode = DecodingMode::paged;
};

namespace detail {

// Lowest id wins ties, so decoding is deterministic.
template <typename T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t row) {
    std::size_t best = 0;
    T best_v = probs.at(row, 0);
    for (std::size_t j = 1; j < probs.cols(); ++j)
        if (probs.at(row, j) > best_v) {
            best_v = probs.at(row, j);
            best = j;
        }
    return best;
}

inline double norm_score(double logp, std::size_t gen_len, double penalty) {
    const double len = static_cast<double>(std::max<std::size_t>(gen_len, 1));
    return logp / std::pow(len, penalty);
}

}  // namespace detail

// Decodes from BOS until EOS or the length budget. The returned sequence is
// the generated content without BOS/EOS. Pages are encoded once and reused.
template <typename T>
std::vector<int> generate(const Model<T>& model, const PagedDocument& pd, const GenerateConfig& gc) {
    if (gc.beam_size < 1) throw input_error("generate: beam_size must be >= 1");
    if (gc.max_len < 1) throw input_error("generate: max_len must be >= 1");
    if (gc.max_len > model.cfg.max_positions)
        throw input_error("generate: max_len " + std::to_string(gc.max_len) + " exceeds max_positions " +
                          std::to_string(model.cfg.max_positions));

    NoGradGuard ng;
    const PageEncodings<T> enc = model.encode_pages(pd);
    // The prefix holds BOS plus generated tokens; keep it inside the position table.
    const std::size_t budget = std::min(gc.max_len, model.cfg.max_positions - 1);

    if (gc.strategy == Strategy::greedy) {
        std::vector<int> prefix = {BOS_ID};
        std::vector<int> out;
        while (out.size() < budget) {
            const auto r = model.forward_encoded(enc, prefix, gc.mode);
            const int tok = static_cast<int>(detail::argmax_row(r.probs, prefix.size() - 1));
            if (tok == EOS_ID) break;
            out.push_back(tok);
            prefix.push_back(tok);
        }
        return out;
    }

    struct Hyp {
        std::vector<int> toks;  // generated tokens, no BOS
        double logp = 0.0;
        bool done = false;
    };
    std::vector<Hyp> beams = {Hyp{}};
    for (std::size_t step = 0; step < budget; ++step) {
        bool all_done = true;
        std::vector<Hyp> pool;
        for (const Hyp& h : beams) {
            if (h.done) {
                pool.push_back(h);
                continue;
            }
            all_done = false;
            std::vector<int> prefix = {BOS_ID};
            prefix.insert(prefix.end(), h.toks.begin(), h.toks.end());
            const auto r = model.forward_encoded(enc, prefix, gc.mode);
            const std::size_t row = prefix.size() - 1;
            for (std::size_t tok = 0; tok < model.cfg.vocab_size; ++tok) {
                Hyp next = h;
                next.logp += std::log(static_cast<double>(r.probs.at(row, tok)));
                if (static_cast<int>(tok) == EOS_ID) {
                    next.done = true;
                } else {
                    next.toks.push_back(static_cast<int>(tok));
                }
                pool.push_back(std::move(next));
            }
        }
        if (all_done) break;
        // Rank by length-normalized score; stable order breaks ties by
        // parent beam then token id.
        std::stable_sort(pool.begin(), pool.end(), [&](const Hyp& a, const Hyp& b) {
            const std::size_t la = a.toks.size() + (a.done ? 1 : 0);
            const std::size_t lb = b.toks.size() + (b.done ? 1 : 0);
            return detail::norm_score(a.logp, la, gc.length_penalty) >
                   detail::norm_score(b.logp, lb, gc.length_penalty);
        });
        if (pool.size() > gc.beam_size) pool.resize(gc.beam_size);
        beams = std::move(pool);
    }

    // Finished hypotheses outrank unfinished ones; among peers the
    // length-normalized score decides.
    const Hyp* best = nullptr;
    double best_score = 0.0;
    for (const Hyp& h : beams) {
        if (best && best->done && !h.done) continue;
        const std::size_t len = h.toks.size() + (h.done ? 1 : 0);
        const double s = detail::norm_score(h.logp, len, gc.length_penalty);
        if (!best || (h.done && !best->done) || s > best_score) {
            best = &h;
            best_score = s;
        }
    }
    return best ? best->toks : std::vector<int>{};
}

// Length-normalized model score of a complete candidate (EOS appended), for
// comparing decoding strategies.
template <typename T>
double sequence_score(const Model<T>& model, const PagedDocument& pd, const std::vector<int>& tokens,
                      DecodingMode mode, double length_penalty) {
    NoGradGuard ng;
    std::vector<int> prefix = {BOS_ID};
    prefix.insert(prefix.end(), tokens.begin(), tokens.end());
    std::vector<int> labels = tokens;
    labels.push_back(EOS_ID);
    const auto r = model.forward(pd, prefix, mode);
    double logp = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        logp += std::log(static_cast<double>(r.probs.at(i, static_cast<std::size_t>(labels[i]))));
    return detail::norm_score(logp, labels.size(), length_penalty);
}

}  // namespace pagesum
