// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "doccomp/errors.hpp"

namespace doccomp {

using Shape = std::vector<std::size_t>;

inline std::size_t volume(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

namespace detail {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle: copies share storage and graph position. Values
/// produced by ops are immutable by convention; only leaves (parameters and
/// inputs) are written through `mutable_data()`.
template <typename T>
class Tensor {
public:
    using Node = detail::Node<T>;

    Tensor() : node_(std::make_shared<Node>()) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.node_->value.assign(volume(shape), T(0));
        t.node_->shape = std::move(shape);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(Shape shape, T fill) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.node_->value.begin(), t.node_->value.end(), fill);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (volume(shape) != data.size()) {
            throw DimensionError("numeric-kernel", "data length " + std::to_string(data.size()) +
                                                       " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v) { return from({}, {v}); }

    /// Internal: wraps a computed value and, when any input tracks gradients,
    /// records `backward` in the graph.
    static Tensor make_result(Shape shape, std::vector<T> value,
                              std::vector<std::shared_ptr<Node>> inputs,
                              std::function<void(Node&)> backward) {
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(value);
        bool any = false;
        if (grad_enabled()) {
            for (const auto& in : inputs) any = any || in->requires_grad;
        }
        if (any) {
            t.node_->requires_grad = true;
            t.node_->inputs = std::move(inputs);
            t.node_->backward = std::move(backward);
        }
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    std::span<T> mutable_data() { return node_->value; }
    const std::vector<T>& values() const { return node_->value; }

    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    T item() const {
        if (size() != 1) {
            throw DimensionError("numeric-kernel", "item() on tensor of shape " + shape_str(shape()));
        }
        return node_->value[0];
    }

    T operator[](std::size_t i) const { return node_->value[i]; }

    const std::shared_ptr<Node>& node() const { return node_; }

    /// Runs reverse-mode accumulation from this scalar. Gradients add into the
    /// `grad` buffers of every reachable tensor that requires them.
    void backward() const {
        if (size() != 1) {
            throw DimensionError("numeric-kernel", "backward() needs a scalar, got " + shape_str(shape()));
        }
        if (!node_->requires_grad) return;
        std::vector<Node*> order;
        topo_sort(order);
        node_->ensure_grad()[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
        }
    }

private:
    void topo_sort(std::vector<Node*>& order) const {
        // Iterative post-order DFS; graphs get deep in the decoder.
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->inputs.size()) {
                Node* child = n->inputs[next++].get();
                if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> node_;
};

/// Initialization recipe recorded with every parameter.
struct InitSpec {
    enum class Kind { Uniform, Zeros, Ones, IdentityLike };
    Kind kind = Kind::Zeros;
    double lo = 0.0;
    double hi = 0.0;

    static InitSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
    static InitSpec zeros() { return {Kind::Zeros, 0.0, 0.0}; }
    static InitSpec ones() { return {Kind::Ones, 0.0, 0.0}; }
    static InitSpec identity_like() { return {Kind::IdentityLike, 0.0, 0.0}; }
};

template <typename T>
struct Parameter {
    std::string name;
    std::string group;  // encoder | reducer | compressor | decoder
    InitSpec init;
    Tensor<T> tensor;
};

}  // namespace doccomp
