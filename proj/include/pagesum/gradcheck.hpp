#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pagesum/optim.hpp"
#include "pagesum/rng.hpp"
#include "pagesum/tensor.hpp"

namespace pagesum {

template <typename To, typename From>
ParamMap<To> clone_params(const ParamMap<From>& src) {
    ParamMap<To> out;
    for (const auto& [name, p] : src) {
        std::vector<To> v(p.numel());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(p.at(i));
        out.emplace(name, Tensor<To>::from_data(p.shape(), std::move(v)));
    }
    return out;
}

struct GradCheckEntry {
    std::string name;
    double err = 0.0;     // max sampled |ad - fd|, scaled by the tensor's gradient magnitude
    double ad_inf = 0.0;  // infinity norm of the full reverse-mode gradient
    double fd_inf = 0.0;  // largest |fd| among sampled coordinates
    std::size_t samples = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_err = 0.0;
    std::string worst;
};

// Compares reverse-mode gradients of `loss32` against central finite
// differences of the same computation carried out in double precision.
// Per tensor, a handful of coordinates is sampled and the worst absolute
// disagreement is scaled by max(|ad|_inf, |fd|_inf, 1e-6). The floor keeps
// parameters whose true gradient is identically zero (key-projection biases
// cancel inside softmax) from turning float roundoff into relative error.
template <typename LossF32, typename LossF64>
GradCheckReport finite_diff_check(ParamMap<float>& params, LossF32&& loss32, LossF64&& loss64,
                                  std::size_t samples_per_tensor, double eps, std::uint64_t seed) {
    for (auto& [name, p] : params) p.node()->requires_grad = true;
    zero_grads(params);
    backward(loss32(params));

    ParamMap<double> params64 = clone_params<double>(params);
    NoGradGuard ng;
    Rng rng(seed);

    GradCheckReport report;
    for (auto& [name, p] : params) {
        const std::size_t n = p.numel();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        const std::size_t take = std::min(samples_per_tensor, n);

        GradCheckEntry e;
        e.name = name;
        e.samples = take;
        for (const float g : p.grad()) e.ad_inf = std::max(e.ad_inf, std::abs(static_cast<double>(g)));

        auto& v64 = params64.at(name).data_mut();
        double max_abs_diff = 0.0;
        for (std::size_t s = 0; s < take; ++s) {
            const std::size_t k = idx[s];
            const double saved = v64[k];
            v64[k] = saved + eps;
            const double lp = static_cast<double>(loss64(params64).item());
            v64[k] = saved - eps;
            const double lm = static_cast<double>(loss64(params64).item());
            v64[k] = saved;
            const double fd = (lp - lm) / (2.0 * eps);
            e.fd_inf = std::max(e.fd_inf, std::abs(fd));
            max_abs_diff = std::max(max_abs_diff, std::abs(static_cast<double>(p.grad()[k]) - fd));
        }
        e.err = max_abs_diff / std::max({e.ad_inf, e.fd_inf, 1e-6});
        if (e.err > report.max_err) {
            report.max_err = e.err;
            report.worst = name;
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace pagesum
