#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pagesum/error.hpp"
#include "pagesum/tensor.hpp"

namespace pagesum {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

// Inverse-square-root schedule with linear warmup:
//   base * min(step^-1/2, step * warmup^-3/2)
// Both branches meet at step == warmup, where the value is base / sqrt(warmup).
inline double lr_at(std::uint64_t step, std::uint64_t warmup, double base) {
    if (warmup == 0) throw input_error("lr_at: warmup must be >= 1");
    if (step == 0) return 0.0;
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    return base * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

template <typename T>
void zero_grads(ParamMap<T>& params) {
    for (auto& [name, p] : params) p.node()->grad.assign(p.numel(), T(0));
}

// Global-norm clipping over every parameter gradient. Returns the pre-clip
// norm; gradients are rescaled in place only when it exceeds max_norm.
template <typename T>
double clip_gradients(ParamMap<T>& params, double max_norm) {
    if (max_norm <= 0.0) throw input_error("clip_gradients: max_norm must be positive");
    double sq = 0.0;
    for (auto& [name, p] : params)
        for (const T& g : p.node()->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T f = static_cast<T>(max_norm / norm);
        for (auto& [name, p] : params)
            for (T& g : p.node()->grad) g *= f;
    }
    return norm;
}

// Adam with bias correction. Parameters never seen before get fresh moment
// buffers; a parameter whose gradient is absent this step is treated as
// having a zero gradient.
template <typename T>
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    std::uint64_t step_count() const { return t_; }

    void step(ParamMap<T>& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, p] : params) {
            auto& st = state_[name];
            const std::size_t n = p.numel();
            if (st.m.size() != n) {
                st.m.assign(n, T(0));
                st.v.assign(n, T(0));
            }
            const std::vector<T>& grad = p.node()->grad;
            const bool has_grad = grad.size() == n;
            std::vector<T>& val = p.data_mut();
            for (std::size_t i = 0; i < n; ++i) {
                const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
                const double m = beta1_ * static_cast<double>(st.m[i]) + (1.0 - beta1_) * g;
                const double v = beta2_ * static_cast<double>(st.v[i]) + (1.0 - beta2_) * g * g;
                st.m[i] = static_cast<T>(m);
                st.v[i] = static_cast<T>(v);
                const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps_);
                val[i] = static_cast<T>(static_cast<double>(val[i]) - update);
            }
        }
    }

    struct Moments {
        std::vector<T> m, v;
    };

    // Serialization access for checkpointing.
    const std::map<std::string, Moments>& state() const { return state_; }
    void restore(std::uint64_t t, std::map<std::string, Moments> state) {
        t_ = t;
        state_ = std::move(state);
    }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

private:
    double beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace pagesum
