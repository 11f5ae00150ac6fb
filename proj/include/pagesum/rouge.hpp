#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pagesum/error.hpp"

namespace pagesum {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

namespace detail {
inline RougeScore rouge_from_counts(double overlap, double hyp_total, double ref_total) {
    RougeScore s;
    if (hyp_total > 0) s.precision = overlap / hyp_total;
    if (ref_total > 0) s.recall = overlap / ref_total;
    if (s.precision + s.recall > 0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

template <typename Tok>
std::map<std::vector<Tok>, std::size_t> ngram_counts(const std::vector<Tok>& seq, std::size_t n) {
    std::map<std::vector<Tok>, std::size_t> counts;
    if (seq.size() >= n)
        for (std::size_t i = 0; i + n <= seq.size(); ++i)
            ++counts[std::vector<Tok>(seq.begin() + i, seq.begin() + i + n)];
    return counts;
}

template <typename Tok>
std::size_t lcs_length(const std::vector<Tok>& a, const std::vector<Tok>& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[n];
}

// Positions of `ref` matched by one canonical LCS alignment with `hyp`.
template <typename Tok>
std::vector<std::size_t> lcs_ref_positions(const std::vector<Tok>& ref, const std::vector<Tok>& hyp) {
    const std::size_t m = ref.size(), n = hyp.size();
    std::vector<std::vector<std::size_t>> dp(m + 1, std::vector<std::size_t>(n + 1, 0));
    for (std::size_t i = 1; i <= m; ++i)
        for (std::size_t j = 1; j <= n; ++j)
            dp[i][j] = ref[i - 1] == hyp[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    std::vector<std::size_t> pos;
    std::size_t i = m, j = n;
    while (i > 0 && j > 0) {
        if (ref[i - 1] == hyp[j - 1] && dp[i][j] == dp[i - 1][j - 1] + 1) {
            pos.push_back(i - 1);
            --i, --j;
        } else if (dp[i - 1][j] >= dp[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(pos.begin(), pos.end());
    return pos;
}
}  // namespace detail

// Clipped n-gram overlap. Empty n-gram sets score zero on their side.
template <typename Tok>
RougeScore rouge_n(const std::vector<Tok>& hyp, const std::vector<Tok>& ref, std::size_t n) {
    if (n < 1 || n > 2) throw input_error("rouge_n: n must be 1 or 2");
    const auto hc = detail::ngram_counts(hyp, n);
    const auto rc = detail::ngram_counts(ref, n);
    std::size_t overlap = 0, hyp_total = 0, ref_total = 0;
    for (const auto& [g, c] : hc) hyp_total += c;
    for (const auto& [g, c] : rc) ref_total += c;
    for (const auto& [g, c] : hc) {
        const auto it = rc.find(g);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    return detail::rouge_from_counts(static_cast<double>(overlap), static_cast<double>(hyp_total),
                                     static_cast<double>(ref_total));
}

// Sentence-level longest-common-subsequence score.
template <typename Tok>
RougeScore rouge_l(const std::vector<Tok>& hyp, const std::vector<Tok>& ref) {
    const std::size_t lcs = detail::lcs_length(hyp, ref);
    return detail::rouge_from_counts(static_cast<double>(lcs), static_cast<double>(hyp.size()),
                                     static_cast<double>(ref.size()));
}

// Summary-level variant: for each reference sentence, union the LCS-matched
// token positions over all hypothesis sentences, then pool the union sizes.
template <typename Tok>
RougeScore rouge_l_summary(const std::vector<std::vector<Tok>>& hyp_sents,
                           const std::vector<std::vector<Tok>>& ref_sents) {
    std::size_t hyp_total = 0, ref_total = 0, union_total = 0;
    for (const auto& h : hyp_sents) hyp_total += h.size();
    for (const auto& r : ref_sents) ref_total += r.size();
    for (const auto& r : ref_sents) {
        std::set<std::size_t> matched;
        for (const auto& h : hyp_sents)
            for (const std::size_t p : detail::lcs_ref_positions(r, h)) matched.insert(p);
        union_total += matched.size();
    }
    return detail::rouge_from_counts(static_cast<double>(union_total), static_cast<double>(hyp_total),
                                     static_cast<double>(ref_total));
}

enum class RougeVariant { r1, r2, rl };

inline RougeVariant rouge_variant_from_string(const std::string& s) {
    if (s == "rouge-1" || s == "1") return RougeVariant::r1;
    if (s == "rouge-2" || s == "2") return RougeVariant::r2;
    if (s == "rouge-l" || s == "l") return RougeVariant::rl;
    throw input_error("unknown rouge variant '" + s + "' (expected rouge-1, rouge-2, or rouge-l)");
}

template <typename Tok>
RougeScore rouge_score(const std::vector<Tok>& hyp, const std::vector<Tok>& ref, RougeVariant v) {
    switch (v) {
        case RougeVariant::r1: return rouge_n(hyp, ref, 1);
        case RougeVariant::r2: return rouge_n(hyp, ref, 2);
        default: return rouge_l(hyp, ref);
    }
}

}  // namespace pagesum
