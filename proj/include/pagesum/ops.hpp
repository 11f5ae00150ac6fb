#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "pagesum/error.hpp"
#include "pagesum/rng.hpp"
#include "pagesum/tensor.hpp"

namespace pagesum {

// ---------------------------------------------------------------------------
// Attention memory instrumentation. Every attention() call reports the number
// of score entries it materializes (l_Q * l_K) to the active meter, one record
// per call. Benchmarks install a meter with MeterScope; outside a scope the
// hook is a no-op.
// ---------------------------------------------------------------------------

struct AttentionMeter {
    std::vector<std::uint64_t> per_call;
    std::uint64_t total = 0;

    void add(std::uint64_t entries) {
        per_call.push_back(entries);
        total += entries;
    }
    void reset() {
        per_call.clear();
        total = 0;
    }
};

namespace detail {
inline AttentionMeter*& attention_meter_slot() {
    thread_local AttentionMeter* slot = nullptr;
    return slot;
}
}  // namespace detail

struct MeterScope {
    AttentionMeter meter;

    MeterScope() : prev_(detail::attention_meter_slot()) { detail::attention_meter_slot() = &meter; }
    ~MeterScope() { detail::attention_meter_slot() = prev_; }
    MeterScope(const MeterScope&) = delete;
    MeterScope& operator=(const MeterScope&) = delete;

private:
    AttentionMeter* prev_;
};

namespace detail {

template <typename T>
void require_rank2(const Tensor<T>& x, const char* op) {
    if (x.rank() != 2) throw input_error(std::string(op) + ": expected rank-2 tensor, got " + shape_str(x.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw input_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* bj = b + j * k;
            T acc = T(0);
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        const T* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            T* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("add", a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode<T>& self) {
        if (an->requires_grad) {
            detail::ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            detail::ensure_grad(*bn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("sub", a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode<T>& self) {
        if (an->requires_grad) {
            detail::ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            detail::ensure_grad(*bn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("mul", a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode<T>& self) {
        if (an->requires_grad) {
            detail::ensure_grad(*an);
            for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            detail::ensure_grad(*bn);
            for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
    std::vector<T> out(a.numel());
    const T sv = static_cast<T>(s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * sv;
    auto an = a.node();
    return detail::make_op<T>("scale", a.shape(), std::move(out), {an}, [an, sv](TensorNode<T>& self) {
        detail::ensure_grad(*an);
        for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * sv;
    });
}

// X[m x n] + b[n], broadcast over rows.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
    detail::require_rank2(x, "add_rowvec");
    if (b.rank() != 1 || b.numel() != x.cols())
        throw input_error("add_rowvec: bias shape " + shape_str(b.shape()) + " does not match columns of " +
                          shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) + b.at(j);
    auto xn = x.node(), bn = b.node();
    return detail::make_op<T>("add_rowvec", x.shape(), std::move(out), {xn, bn}, [xn, bn, m, n](TensorNode<T>& self) {
        if (xn->requires_grad) {
            detail::ensure_grad(*xn);
            for (std::size_t i = 0; i < m * n; ++i) xn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            detail::ensure_grad(*bn);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) bn->grad[j] += self.grad[i * n + j];
        }
    });
}

// Row i of X scaled by c[i]; c is rank-1 of length rows or [rows x 1].
template <typename T>
Tensor<T> mul_colvec(const Tensor<T>& x, const Tensor<T>& c) {
    detail::require_rank2(x, "mul_colvec");
    if (c.numel() != x.rows() || (c.rank() == 2 && c.cols() != 1))
        throw input_error("mul_colvec: weight shape " + shape_str(c.shape()) + " does not match rows of " +
                          shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const T ci = c.at(i);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i, j) * ci;
    }
    auto xn = x.node(), cn = c.node();
    return detail::make_op<T>("mul_colvec", x.shape(), std::move(out), {xn, cn}, [xn, cn, m, n](TensorNode<T>& self) {
        if (xn->requires_grad) {
            detail::ensure_grad(*xn);
            for (std::size_t i = 0; i < m; ++i) {
                const T ci = cn->value[i];
                for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += self.grad[i * n + j] * ci;
            }
        }
        if (cn->requires_grad) {
            detail::ensure_grad(*cn);
            for (std::size_t i = 0; i < m; ++i) {
                T acc = T(0);
                for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * xn->value[i * n + j];
                cn->grad[i] += acc;
            }
        }
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw input_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<T> out(m * n, T(0));
    detail::gemm_nn_acc(m, k, n, a.data().data(), b.data().data(), out.data());
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("matmul", {m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](TensorNode<T>& self) {
        if (an->requires_grad) {
            detail::ensure_grad(*an);
            detail::gemm_nt_acc(m, n, k, self.grad.data(), bn->value.data(), an->grad.data());
        }
        if (bn->requires_grad) {
            detail::ensure_grad(*bn);
            detail::gemm_tn_acc(m, k, n, an->value.data(), self.grad.data(), bn->grad.data());
        }
    });
}

// alpha * A * B^T without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt_scaled(const Tensor<T>& a, const Tensor<T>& b, double alpha) {
    detail::require_rank2(a, "matmul_nt_scaled");
    detail::require_rank2(b, "matmul_nt_scaled");
    if (a.cols() != b.cols())
        throw input_error("matmul_nt_scaled: inner dimensions disagree, " + shape_str(a.shape()) + " * " +
                          shape_str(b.shape()) + "^T");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const T av = static_cast<T>(alpha);
    std::vector<T> out(m * n, T(0));
    detail::gemm_nt_acc(m, k, n, a.data().data(), b.data().data(), out.data());
    if (alpha != 1.0)
        for (T& v : out) v *= av;
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>("matmul_nt_scaled", {m, n}, std::move(out), {an, bn},
                              [an, bn, m, k, n, av](TensorNode<T>& self) {
                                  std::vector<T> g(self.grad.size());
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * av;
                                  if (an->requires_grad) {
                                      detail::ensure_grad(*an);
                                      detail::gemm_nn_acc(m, n, k, g.data(), bn->value.data(), an->grad.data());
                                  }
                                  if (bn->requires_grad) {
                                      detail::ensure_grad(*bn);
                                      detail::gemm_tn_acc(m, n, k, g.data(), an->value.data(), bn->grad.data());
                                  }
                              });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
    auto an = a.node();
    return detail::make_op<T>("transpose", {n, m}, std::move(out), {an}, [an, m, n](TensorNode<T>& self) {
        detail::ensure_grad(*an);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j * m + i];
    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    detail::require_rank2(x, "slice_cols");
    if (c0 >= c1 || c1 > x.cols()) throw input_error("slice_cols: bad column range");
    const std::size_t m = x.rows(), n = x.cols(), w = c1 - c0;
    std::vector<T> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.at(i, c0 + j);
    auto xn = x.node();
    return detail::make_op<T>("slice_cols", {m, w}, std::move(out), {xn}, [xn, m, n, w, c0](TensorNode<T>& self) {
        detail::ensure_grad(*xn);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) xn->grad[i * n + c0 + j] += self.grad[i * w + j];
    });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw input_error("concat_cols: no parts");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_cols");
        if (p.rows() != m) throw input_error("concat_cols: row count mismatch");
        n += p.cols();
        nodes.push_back(p.node());
    }
    std::vector<T> out(m * n);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = p.at(i, j);
        off += w;
    }
    auto nodes_copy = nodes;
    return detail::make_op<T>("concat_cols", {m, n}, std::move(out), std::move(nodes),
                              [nodes_copy, m, n](TensorNode<T>& self) {
                                  std::size_t off = 0;
                                  for (const auto& pn : nodes_copy) {
                                      const std::size_t w = pn->shape[1];
                                      if (pn->requires_grad) {
                                          detail::ensure_grad(*pn);
                                          for (std::size_t i = 0; i < m; ++i)
                                              for (std::size_t j = 0; j < w; ++j)
                                                  pn->grad[i * w + j] += self.grad[i * n + off + j];
                                      }
                                      off += w;
                                  }
                              });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw input_error("concat_rows: no parts");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_rows");
        if (p.cols() != n) throw input_error("concat_rows: column count mismatch");
        m += p.rows();
        nodes.push_back(p.node());
    }
    std::vector<T> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    auto nodes_copy = nodes;
    return detail::make_op<T>("concat_rows", {m, n}, std::move(out), std::move(nodes),
                              [nodes_copy, n](TensorNode<T>& self) {
                                  std::size_t off = 0;
                                  for (const auto& pn : nodes_copy) {
                                      const std::size_t len = pn->value.size();
                                      if (pn->requires_grad) {
                                          detail::ensure_grad(*pn);
                                          for (std::size_t i = 0; i < len; ++i) pn->grad[i] += self.grad[off + i];
                                      }
                                      off += len;
                                  }
                              });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T acc = T(0);
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
    auto xn = x.node();
    return detail::make_op<T>("sum_all", {1}, {acc}, {xn}, [xn](TensorNode<T>& self) {
        detail::ensure_grad(*xn);
        for (T& g : xn->grad) g += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr double inv_sqrt2 = 0.70710678118654752440;
inline constexpr double inv_sqrt2pi = 0.39894228040143267794;
}  // namespace detail

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    using detail::inv_sqrt2;
    using detail::inv_sqrt2pi;
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(x.at(i));
        out[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)));
    }
    auto xn = x.node();
    return detail::make_op<T>("gelu", x.shape(), std::move(out), {xn}, [xn](TensorNode<T>& self) {
        detail::ensure_grad(*xn);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double v = static_cast<double>(xn->value[i]);
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            xn->grad[i] += self.grad[i] * static_cast<T>(cdf + v * pdf);
        }
    });
}

// Numerically stable softmax along `axis` (max subtraction). Valid for rank-1
// (axis 0) and rank-2 tensors.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (x.rank() > 2) throw input_error("softmax: rank > 2 unsupported");
    if (axis >= x.rank()) throw input_error("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (!std::isfinite(static_cast<double>(x.at(i)))) throw numeric_error("softmax: non-finite input");

    std::size_t slices, len, stride, step;
    if (x.rank() == 1) {
        slices = 1, len = x.numel(), stride = 1, step = 0;
    } else if (axis == 1) {
        slices = x.rows(), len = x.cols(), stride = 1, step = x.cols();
    } else {
        slices = x.cols(), len = x.rows(), stride = x.cols(), step = 1;
    }

    std::vector<T> out(x.numel());
    for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t base = s * step;
        T mx = x.at(base);
        for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x.at(base + i * stride));
        T sum = T(0);
        for (std::size_t i = 0; i < len; ++i) {
            const T e = std::exp(x.at(base + i * stride) - mx);
            out[base + i * stride] = e;
            sum += e;
        }
        for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= sum;
    }
    auto xn = x.node();
    return detail::make_op<T>("softmax", x.shape(), std::move(out), {xn},
                              [xn, slices, len, stride, step](TensorNode<T>& self) {
                                  detail::ensure_grad(*xn);
                                  for (std::size_t s = 0; s < slices; ++s) {
                                      const std::size_t base = s * step;
                                      T dot = T(0);
                                      for (std::size_t i = 0; i < len; ++i) {
                                          const std::size_t k = base + i * stride;
                                          dot += self.grad[k] * self.value[k];
                                      }
                                      for (std::size_t i = 0; i < len; ++i) {
                                          const std::size_t k = base + i * stride;
                                          xn->grad[k] += self.value[k] * (self.grad[k] - dot);
                                      }
                                  }
                              });
}

// Disallowed positions are overwritten with `fill` (no gradient flows there).
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const BoolMatrix& mask, T fill) {
    detail::require_rank2(x, "masked_fill");
    if (mask.rows() != x.rows() || mask.cols() != x.cols())
        throw input_error("masked_fill: mask dimensions do not match " + shape_str(x.shape()));
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<T> out(m * n);
    std::vector<std::uint8_t> keep(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const bool k = mask.at(i, j);
            keep[i * n + j] = k ? 1 : 0;
            out[i * n + j] = k ? x.at(i, j) : fill;
        }
    auto xn = x.node();
    return detail::make_op<T>("masked_fill", x.shape(), std::move(out), {xn},
                              [xn, keep = std::move(keep)](TensorNode<T>& self) {
                                  detail::ensure_grad(*xn);
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      if (keep[i]) xn->grad[i] += self.grad[i];
                              });
}

// Row-wise layer normalization with learned gain/bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, double eps = 1e-5) {
    detail::require_rank2(x, "layer_norm");
    const std::size_t m = x.rows(), n = x.cols();
    if (gain.numel() != n || bias.numel() != n) throw input_error("layer_norm: gain/bias length must equal columns");

    std::vector<T> out(m * n), xhat(m * n), inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        T mean = T(0);
        for (std::size_t j = 0; j < n; ++j) mean += x.at(i, j);
        mean /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            const T d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        inv_std[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const T h = (x.at(i, j) - mean) * inv;
            xhat[i * n + j] = h;
            out[i * n + j] = gain.at(j) * h + bias.at(j);
        }
    }
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return detail::make_op<T>(
        "layer_norm", x.shape(), std::move(out), {xn, gn, bn},
        [xn, gn, bn, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode<T>& self) {
            if (gn->requires_grad) detail::ensure_grad(*gn);
            if (bn->requires_grad) detail::ensure_grad(*bn);
            if (xn->requires_grad) detail::ensure_grad(*xn);
            for (std::size_t i = 0; i < m; ++i) {
                T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t k = i * n + j;
                    const T dy = self.grad[k];
                    if (gn->requires_grad) gn->grad[j] += dy * xhat[k];
                    if (bn->requires_grad) bn->grad[j] += dy;
                    const T dxhat = dy * gn->value[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat[k];
                }
                if (!xn->requires_grad) continue;
                mean_dxhat /= static_cast<T>(n);
                mean_dxhat_xhat /= static_cast<T>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t k = i * n + j;
                    const T dxhat = self.grad[k] * gn->value[j];
                    xn->grad[k] += inv_std[i] * (dxhat - mean_dxhat - xhat[k] * mean_dxhat_xhat);
                }
            }
        });
}

// Rows of `table` gathered by token id.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
    detail::require_rank2(table, "embedding");
    if (ids.empty()) throw input_error("embedding: empty id sequence");
    const std::size_t v = table.rows(), d = table.cols(), m = ids.size();
    std::vector<T> out(m * d);
    for (std::size_t i = 0; i < m; ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
            throw input_error("embedding: id " + std::to_string(ids[i]) + " out of range [0," + std::to_string(v) + ")");
        const T* row = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
        std::copy(row, row + d, out.begin() + i * d);
    }
    auto tn = table.node();
    return detail::make_op<T>("embedding", {m, d}, std::move(out), {tn}, [tn, ids, d](TensorNode<T>& self) {
        detail::ensure_grad(*tn);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            T* dst = tn->grad.data() + static_cast<std::size_t>(ids[i]) * d;
            const T* src = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

// Inverted dropout; identity when rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw input_error("dropout: rate must be < 1");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> out(x.numel());
    std::vector<std::uint8_t> keep(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool k = rng.uniform() >= rate;
        keep[i] = k ? 1 : 0;
        out[i] = k ? x.at(i) * keep_scale : T(0);
    }
    auto xn = x.node();
    return detail::make_op<T>("dropout", x.shape(), std::move(out), {xn},
                              [xn, keep = std::move(keep), keep_scale](TensorNode<T>& self) {
                                  detail::ensure_grad(*xn);
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      if (keep[i]) xn->grad[i] += self.grad[i] * keep_scale;
                              });
}

// ---------------------------------------------------------------------------
// Attention and loss
// ---------------------------------------------------------------------------

// softmax(Q K^T / sqrt(d)) V with optional admissibility mask. Disallowed
// scores are set to -1e9 before the softmax; a query row with no allowed key
// is rejected. Reports l_Q * l_K materialized score entries to the meter.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const BoolMatrix* mask = nullptr) {
    detail::require_rank2(q, "attention");
    detail::require_rank2(k, "attention");
    detail::require_rank2(v, "attention");
    if (q.cols() != k.cols())
        throw input_error("attention: query/key width mismatch " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    if (v.rows() != k.rows()) throw input_error("attention: key/value length mismatch");
    if (mask) {
        if (mask->rows() != q.rows() || mask->cols() != k.rows())
            throw input_error("attention: mask dimensions do not match score matrix");
        for (std::size_t i = 0; i < mask->rows(); ++i) {
            bool any = false;
            for (std::size_t j = 0; j < mask->cols() && !any; ++j) any = mask->at(i, j);
            if (!any) throw degenerate_mask_error("attention: query row " + std::to_string(i) + " has no allowed key");
        }
    }

    if (auto* meter = detail::attention_meter_slot())
        meter->add(static_cast<std::uint64_t>(q.rows()) * static_cast<std::uint64_t>(k.rows()));

    Tensor<T> probs;
    {
        Tensor<T> scores = matmul_nt_scaled(q, k, 1.0 / std::sqrt(static_cast<double>(q.cols())));
        if (mask) scores = masked_fill(scores, *mask, static_cast<T>(-1e9));
        probs = softmax(scores, 1);
    }
    return matmul(probs, v);
}

// Mean over positions of the label-smoothed negative log-likelihood:
// (1-eps) * NLL(target) + eps * mean-NLL over the vocabulary.
template <typename T>
Tensor<T> cross_entropy_smoothed(const Tensor<T>& logits, const std::vector<int>& targets, double epsilon) {
    detail::require_rank2(logits, "cross_entropy_smoothed");
    const std::size_t m = logits.rows(), vocab = logits.cols();
    if (targets.size() != m) throw input_error("cross_entropy_smoothed: one target per row required");
    if (m < 1) throw input_error("cross_entropy_smoothed: empty sequence");
    if (epsilon < 0.0 || epsilon >= 1.0) throw input_error("cross_entropy_smoothed: epsilon must be in [0,1)");
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= vocab)
            throw input_error("cross_entropy_smoothed: target " + std::to_string(t) + " out of range [0," +
                              std::to_string(vocab) + ")");

    // loss_i = lse_i - (1-eps) z_target - (eps/V) sum_v z_v
    std::vector<T> probs(m * vocab);
    T loss = T(0);
    for (std::size_t i = 0; i < m; ++i) {
        const T* z = logits.data().data() + i * vocab;
        T mx = z[0];
        for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, z[j]);
        T sum_exp = T(0), sum_z = T(0);
        for (std::size_t j = 0; j < vocab; ++j) {
            const T e = std::exp(z[j] - mx);
            probs[i * vocab + j] = e;
            sum_exp += e;
            sum_z += z[j];
        }
        const T lse = mx + std::log(sum_exp);
        for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] /= sum_exp;
        loss += lse - static_cast<T>(1.0 - epsilon) * z[targets[i]] -
                static_cast<T>(epsilon / static_cast<double>(vocab)) * sum_z;
    }
    loss /= static_cast<T>(m);

    auto ln = logits.node();
    return detail::make_op<T>(
        "cross_entropy_smoothed", {1}, {loss}, {ln},
        [ln, targets, m, vocab, epsilon, probs = std::move(probs)](TensorNode<T>& self) {
            detail::ensure_grad(*ln);
            const T g = self.grad[0] / static_cast<T>(m);
            const T uniform = static_cast<T>(epsilon / static_cast<double>(vocab));
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < vocab; ++j) {
                    T q = uniform;
                    if (j == static_cast<std::size_t>(targets[i])) q += static_cast<T>(1.0 - epsilon);
                    ln->grad[i * vocab + j] += g * (probs[i * vocab + j] - q);
                }
            }
        });
}

}  // namespace pagesum
