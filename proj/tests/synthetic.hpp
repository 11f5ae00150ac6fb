#pragma once

// Shared deterministic generators for tests.

#include <cstdint>
#include <string>
#include <vector>

#include "pagesum/model.hpp"
#include "pagesum/ops.hpp"
#include "pagesum/paging.hpp"
#include "pagesum/rng.hpp"
#include "pagesum/text.hpp"
#include "pagesum/training.hpp"

namespace synthetic {

// Ten document-summary pairs a tiny model can memorize: two sentences of six
// random content tokens, summary = first two tokens of each sentence.
inline std::vector<pagesum::SentenceDoc> overfit_corpus(std::uint64_t seed) {
    pagesum::Rng rng(seed);
    std::vector<pagesum::SentenceDoc> docs;
    for (int i = 0; i < 10; ++i) {
        pagesum::SentenceDoc d;
        d.id = "syn_" + std::to_string(i);
        std::vector<int> summary;
        for (int s = 0; s < 2; ++s) {
            std::vector<int> sent;
            for (int k = 0; k < 6; ++k) sent.push_back(5 + static_cast<int>(rng.below(59)));
            summary.push_back(sent[0]);
            summary.push_back(sent[1]);
            d.sentences.push_back(sent);
        }
        d.summary.push_back(summary);
        docs.push_back(std::move(d));
    }
    return docs;
}

// Sliding-window corpus with an exactly known similarity schedule. Document d
// uses its own token alphabet of size n_sentences*stride; sentence i holds the
// window [i*stride, i*stride + tokens_per_sentence) taken circularly. Every
// token then appears in the same number of sentences, so the tf-idf embedding
// reduces to normalized 0/1 counts and the cosine between two sentences is
// their window overlap divided by tokens_per_sentence. Requires
// tokens_per_sentence <= n_sentences*stride so windows hold distinct tokens.
struct LocalityCorpus {
    std::vector<pagesum::SentenceDoc> docs;
    std::size_t vocab_size = 0;
    std::size_t n_sentences = 0;
    std::size_t tokens_per_sentence = 0;
    std::size_t stride = 0;

    // Two circular arcs of length m on a circle of size A, starts delta apart,
    // overlap in max(0, m-delta) + max(0, m+delta-A) positions.
    double expected_sim(std::size_t index_distance) const {
        const std::size_t c = std::min(index_distance, n_sentences - index_distance);
        const std::size_t delta = c * stride;
        const std::size_t m = tokens_per_sentence;
        const std::size_t A = n_sentences * stride;
        std::size_t over = delta < m ? m - delta : 0;
        if (delta + m > A) over += delta + m - A;
        return static_cast<double>(over) / static_cast<double>(m);
    }

    // Mean over all intra-document pairs, every index distance.
    double expected_corpus_mean() const {
        double num = 0, den = 0;
        for (std::size_t d = 1; d < n_sentences; ++d) {
            const double pairs = static_cast<double>(n_sentences - d);
            num += pairs * expected_sim(d);
            den += pairs;
        }
        return num / den;
    }
};

inline LocalityCorpus locality_corpus(std::size_t n_docs, std::size_t n_sentences,
                                      std::size_t tokens_per_sentence, std::size_t stride) {
    LocalityCorpus lc;
    lc.n_sentences = n_sentences;
    lc.tokens_per_sentence = tokens_per_sentence;
    lc.stride = stride;
    const std::size_t alphabet = n_sentences * stride;
    int next_id = 5;
    for (std::size_t d = 0; d < n_docs; ++d) {
        pagesum::SentenceDoc doc;
        doc.id = "loc_" + std::to_string(d);
        for (std::size_t i = 0; i < n_sentences; ++i) {
            std::vector<int> sent;
            for (std::size_t k = 0; k < tokens_per_sentence; ++k)
                sent.push_back(next_id + static_cast<int>((i * stride + k) % alphabet));
            doc.sentences.push_back(std::move(sent));
        }
        lc.docs.push_back(std::move(doc));
        next_id += static_cast<int>(alphabet);
    }
    lc.vocab_size = static_cast<std::size_t>(next_id);
    return lc;
}

// Random documents for fusion-pair mining: <= max_sentences sentences of 3-6
// tokens over a small alphabet, summaries of 1-3 sentences built either by
// concatenating fragments of two source sentences or by copying fragments.
struct FusionDoc {
    std::vector<std::vector<int>> sentences;
    std::vector<std::vector<int>> summary;
};

inline FusionDoc fusion_doc(pagesum::Rng& rng, std::size_t max_sentences) {
    FusionDoc d;
    const std::size_t n = 2 + rng.below(max_sentences - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> sent;
        const std::size_t len = 3 + rng.below(4);
        for (std::size_t k = 0; k < len; ++k) sent.push_back(5 + static_cast<int>(rng.below(12)));
        d.sentences.push_back(std::move(sent));
    }
    const std::size_t n_sum = 1 + rng.below(3);
    for (std::size_t s = 0; s < n_sum; ++s) {
        std::vector<int> h;
        if (rng.below(2) == 0) {
            const std::size_t i = rng.below(n);
            std::size_t j = rng.below(n);
            if (j == i) j = (j + 1) % n;
            const auto& a = d.sentences[i];
            const auto& b = d.sentences[j];
            h.insert(h.end(), a.begin(), a.begin() + 1 + rng.below(a.size()));
            h.insert(h.end(), b.begin(), b.begin() + 1 + rng.below(b.size()));
        } else {
            const auto& a = d.sentences[rng.below(n)];
            h.insert(h.end(), a.begin(), a.begin() + 1 + rng.below(a.size()));
        }
        d.summary.push_back(std::move(h));
    }
    return d;
}

// Two fixed small documents driving the full paged forward pass.
inline std::vector<pagesum::SentenceDoc> gradcheck_docs() {
    std::vector<pagesum::SentenceDoc> docs(2);
    docs[0].id = "g0";
    docs[0].sentences = {{5, 6, 7, 8, 9}, {10, 11, 12}};
    docs[0].summary = {{13, 14, 15}};
    docs[1].id = "g1";
    docs[1].sentences = {{20, 21, 22, 23}, {24, 25, 26, 27}};
    docs[1].summary = {{28, 29}};
    return docs;
}

// Summed teacher-forced loss over gradcheck_docs, usable at float and double.
template <typename Params>
auto gradcheck_loss(const pagesum::ModelConfig& mc, const pagesum::PagingConfig& pc, Params& params) {
    using T = typename Params::mapped_type::value_type;
    pagesum::Model<T> m;
    m.cfg = mc;
    m.params = params;
    pagesum::Tensor<T> total;
    bool first = true;
    for (const auto& d : gradcheck_docs()) {
        const auto pd = pagesum::split(d, pc);
        std::vector<int> prefix, labels;
        pagesum::detail::teacher_forcing_pair(d, mc.max_positions, prefix, labels);
        const auto r = m.forward(pd, prefix, pagesum::DecodingMode::paged);
        const auto l = pagesum::cross_entropy_smoothed(r.logits, labels, T(0.1));
        total = first ? l : pagesum::add(total, l);
        first = false;
    }
    return total;
}

}  // namespace synthetic
