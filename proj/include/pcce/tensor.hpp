// Copyright 2026 the pcce authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace pcce::nd {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d <= 0) throw std::invalid_argument("tensor shape dimensions must be positive");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

/// One node of the recorded computation graph. Children hold shared_ptrs to
/// their parents, so dropping the last handle to a graph output releases the
/// whole tape while leaf parameters (held elsewhere) survive.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same size as data
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;  // pushes this->grad into parents' grads

    int64_t numel() const { return static_cast<int64_t>(data.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

/// Value-semantic handle to a graph node. Copies share the node, which is how
/// recorded operations reference their inputs. All mutation of values goes
/// through explicit accessors; ops never modify their inputs.
template <typename T>
class Tensor {
public:
    using Node = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return from_data(shape, std::vector<T>(shape_numel(shape), T(0)));
    }

    static Tensor full(Shape shape, T value) {
        return from_data(shape, std::vector<T>(shape_numel(shape), value));
    }

    static Tensor from_data(Shape shape, std::vector<T> data) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        return t;
    }

    static Tensor scalar(T value) { return from_data({1}, {value}); }

    /// Leaf tensor that participates in gradient computation.
    static Tensor param(Shape shape, std::vector<T> data) {
        Tensor t = from_data(std::move(shape), std::move(data));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }

    std::span<T> data() { return {node_->data.data(), node_->data.size()}; }
    std::span<const T> data() const { return {node_->data.data(), node_->data.size()}; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) {
        if (!node_->is_leaf) throw std::invalid_argument("requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = v;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const {
        if (node_->grad.empty()) throw std::invalid_argument("tensor has no gradient");
        return {node_->grad.data(), node_->grad.size()};
    }
    std::span<T> grad_mut() {
        node_->ensure_grad();
        return {node_->grad.data(), node_->grad.size()};
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape()));
        return node_->data[0];
    }

    /// Reverse-mode sweep from a scalar output. Gradients accumulate into
    /// leaves with requires_grad; intermediate grads are reset per call so a
    /// second backward() on the same graph adds another full contribution.
    void backward() {
        if (numel() != 1) throw std::invalid_argument("backward() requires a scalar output");
        std::vector<Node*> order = topo_order();
        for (Node* n : order)
            if (!n->is_leaf) n->grad.assign(n->data.size(), T(0));
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn();
    }

    std::shared_ptr<Node> node() const { return node_; }

    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::vector<Node*> topo_order() {
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        // iterative post-order DFS; graphs from long training expressions can
        // exceed the default stack if done recursively
        std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node* p = n->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
    for (const Tensor<T>* t : ts)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace detail

}  // namespace pcce::nd
