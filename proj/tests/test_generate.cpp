#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pagesum/error.hpp"
#include "pagesum/generate.hpp"
#include "pagesum/model.hpp"
#include "pagesum/paging.hpp"
#include "pagesum/rng.hpp"
#include "pagesum/text.hpp"

using namespace pagesum;

namespace {

ModelConfig small_config() {
    ModelConfig mc;
    mc.vocab_size = 8;
    mc.d_model = 8;
    mc.n_heads = 2;
    mc.n_encoder_layers = 1;
    mc.n_decoder_layers = 1;
    mc.d_ff = 16;
    mc.max_positions = 16;
    return mc;
}

PagedDocument small_doc(std::size_t pages) {
    SentenceDoc d;
    d.id = "g";
    d.sentences = {{5, 6, 7}, {7, 6, 5}, {6, 6, 7}, {5, 7, 5}};
    d.summary = {{5, 6}};
    PagingConfig pc;
    pc.page_size = 12;
    pc.num_pages = pages;
    pc.max_total_tokens = 48;
    return split(d, pc);
}

Model<float> make_model(std::uint64_t seed) {
    Rng rng(seed);
    auto m = Model<float>::init(small_config(), rng);
    // pull the confidence projection off zero so paging matters
    Rng crng(seed + 100);
    for (auto& v : m.params.at("conf_proj.w").data_mut()) v = static_cast<float>(crng.normal(0.0, 0.5));
    return m;
}

// all content sequences (any non-EOS id) up to the given length
void enumerate_candidates(std::size_t vocab, std::size_t max_content, std::vector<int>& cur,
                          std::vector<std::vector<int>>& out) {
    out.push_back(cur);
    if (cur.size() == max_content) return;
    for (std::size_t t = 0; t < vocab; ++t) {
        if (static_cast<int>(t) == EOS_ID) continue;
        cur.push_back(static_cast<int>(t));
        enumerate_candidates(vocab, max_content, cur, out);
        cur.pop_back();
    }
}

}  // namespace

TEST_CASE("beam of width one reproduces greedy decoding") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        auto m = make_model(seed);
        for (auto mode : {DecodingMode::paged, DecodingMode::global}) {
            auto pd = small_doc(2);
            GenerateConfig g;
            g.strategy = Strategy::greedy;
            g.max_len = 6;
            g.mode = mode;
            auto greedy = generate(m, pd, g);

            g.strategy = Strategy::beam;
            g.beam_size = 1;
            auto beam = generate(m, pd, g);
            CHECK(greedy == beam);
        }
    }
}

TEST_CASE("wide beam matches exhaustive search over short sequences") {
    // pool never exceeds 8 + 49*8 = 400 hypotheses for three steps over an
    // 8-token vocabulary, so width 400 disables pruning entirely
    for (std::uint64_t seed : {21u, 22u}) {
        auto m = make_model(seed);
        auto pd = small_doc(2);
        for (double penalty : {1.0, 0.6}) {
            GenerateConfig g;
            g.strategy = Strategy::beam;
            g.beam_size = 400;
            g.max_len = 3;
            g.length_penalty = penalty;
            auto beam = generate(m, pd, g);

            std::vector<int> cur;
            std::vector<std::vector<int>> cands;
            enumerate_candidates(m.cfg.vocab_size, 2, cur, cands);
            REQUIRE(cands.size() == 57);  // 1 + 7 + 49

            double best = -1e300;
            std::vector<int> best_toks;
            for (const auto& c : cands) {
                const double s = sequence_score(m, pd, c, DecodingMode::paged, penalty);
                if (s > best) {
                    best = s;
                    best_toks = c;
                }
            }
            CHECK(beam == best_toks);
            CHECK(sequence_score(m, pd, beam, DecodingMode::paged, penalty) == best);
        }
    }
}

TEST_CASE("greedy choices match teacher-forced argmax rows") {
    auto m = make_model(31);
    auto pd = small_doc(3);
    GenerateConfig g;
    g.max_len = 5;
    auto out = generate(m, pd, g);

    std::vector<int> prefix = {BOS_ID};
    prefix.insert(prefix.end(), out.begin(), out.end());
    NoGradGuard ng;
    auto r = m.forward(pd, prefix, DecodingMode::paged);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(detail::argmax_row(r.probs, i) == static_cast<std::size_t>(out[i]));
    // the step after the last emitted token either hit EOS or the budget
    if (out.size() < g.max_len) CHECK(detail::argmax_row(r.probs, out.size()) == static_cast<std::size_t>(EOS_ID));
}

TEST_CASE("length budget is respected") {
    auto m = make_model(41);
    auto pd = small_doc(2);
    GenerateConfig g;
    g.max_len = 2;
    CHECK(generate(m, pd, g).size() <= 2);

    g.strategy = Strategy::beam;
    g.beam_size = 3;
    CHECK(generate(m, pd, g).size() <= 2);

    // the prefix must stay inside the position table even at max_len
    g.strategy = Strategy::greedy;
    g.max_len = m.cfg.max_positions;
    CHECK(generate(m, pd, g).size() <= m.cfg.max_positions - 1);
}

TEST_CASE("generation settings are validated") {
    auto m = make_model(51);
    auto pd = small_doc(2);
    GenerateConfig g;
    g.beam_size = 0;
    CHECK_THROWS_AS(generate(m, pd, g), input_error);
    g = GenerateConfig{};
    g.max_len = 0;
    CHECK_THROWS_AS(generate(m, pd, g), input_error);
    g = GenerateConfig{};
    g.max_len = m.cfg.max_positions + 1;
    CHECK_THROWS_AS(generate(m, pd, g), input_error);
}

TEST_CASE("sequence score scales with the length penalty") {
    auto m = make_model(61);
    auto pd = small_doc(2);
    std::vector<int> toks = {5, 6, 7};
    const double raw = sequence_score(m, pd, toks, DecodingMode::paged, 0.0);
    const double normed = sequence_score(m, pd, toks, DecodingMode::paged, 1.0);
    // EOS counts toward the length
    CHECK(std::abs(normed - raw / 4.0) < 1e-12);
    CHECK(raw < 0.0);
}

TEST_CASE("strategy parsing") {
    CHECK(strategy_from_string("greedy") == Strategy::greedy);
    CHECK(strategy_from_string("beam") == Strategy::beam);
    CHECK_THROWS_AS(strategy_from_string("sample"), input_error);
}
