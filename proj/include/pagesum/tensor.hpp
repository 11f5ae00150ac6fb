#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "pagesum/error.hpp"
#include "pagesum/rng.hpp"

namespace pagesum {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

// Forward graphs are built only while this is true; NoGradGuard flips it off
// for generation, evaluation and benchmarks.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized lazily by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(TensorNode<T>&)> backprop;
};

// A dense row-major tensor with reverse-mode differentiation. Values are
// immutable once produced by an operation; leaves (parameters) may be updated
// in place through data_mut() by the optimizer.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw input_error("tensor: shape " + shape_str(shape) + " does not match data length " +
                              std::to_string(data.size()));
        for (std::size_t d : shape)
            if (d == 0) throw input_error("tensor: zero dimension in shape " + shape_str(shape));
        auto n = std::make_shared<TensorNode<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d(shape_numel(shape), T(0));
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        std::vector<T> d(shape_numel(shape), v);
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    static Tensor random_normal(Shape shape, Rng& rng, double stddev, bool requires_grad = false) {
        std::vector<T> d(shape_numel(shape));
        for (auto& x : d) x = static_cast<T>(rng.normal(0.0, stddev));
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : std::size_t(1); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<T>& data() const { return node_->value; }
    // In-place access; reserved for leaves (parameter updates, test setup).
    std::vector<T>& data_mut() { return node_->value; }
    const std::vector<T>& grad() const { return node_->grad; }

    T item() const {
        if (numel() != 1) throw input_error("item: tensor is not scalar, shape " + shape_str(shape()));
        return node_->value[0];
    }
    T at(std::size_t i) const { return node_->value.at(i); }
    T at(std::size_t i, std::size_t j) const { return node_->value.at(i * cols() + j); }

    std::shared_ptr<TensorNode<T>>& node() { return node_; }
    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
void throw_if_not_finite(const std::vector<T>& v, const char* op) {
    for (const T& x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw numeric_error(std::string(op) + ": non-finite value produced");
}

// Builds an op result node. The finite scan enforces the engine-wide rule that
// no operation may emit NaN/Inf.
template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                  std::function<void(TensorNode<T>&)> backprop) {
    throw_if_not_finite(value, op);
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool need = false;
    if (grad_mode()) {
        for (const auto& in : inputs)
            if (in->requires_grad) { need = true; break; }
    }
    if (need) {
        n->requires_grad = true;
        n->inputs = std::move(inputs);
        n->backprop = std::move(backprop);
    }
    return Tensor<T>(std::move(n));
}

template <typename T>
void ensure_grad(TensorNode<T>& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients of every node reachable
// from `loss` are reset first, so each call reports exactly this graph's
// gradients; accumulation across examples is the caller's job.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw input_error("backward: loss must be scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS; child-before-parent once reversed.
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    struct Frame {
        TensorNode<T>* n;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_input < f.n->inputs.size()) {
            TensorNode<T>* in = f.n->inputs[f.next_input++].get();
            if (in->requires_grad && seen.insert(in).second) stack.push_back({in, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    for (TensorNode<T>* n : order) n->grad.assign(n->value.size(), T(0));
    loss.node()->grad[0] = T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// Key/query admissibility mask; true marks an allowed position.
class BoolMatrix {
public:
    BoolMatrix(std::size_t rows, std::size_t cols, bool fill = true)
        : rows_(rows), cols_(cols), data_(rows * cols, fill ? 1 : 0) {}

    static BoolMatrix causal(std::size_t n) {
        BoolMatrix m(n, n, false);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { data_[i * cols_ + j] = v ? 1 : 0; }

private:
    std::size_t rows_, cols_;
    std::vector<std::uint8_t> data_;
};

}  // namespace pagesum
