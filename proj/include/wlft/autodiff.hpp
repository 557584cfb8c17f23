#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wlft/errors.hpp"
#include "wlft/tensor.hpp"

namespace wlft {

// Reverse-mode autodiff over a dynamically recorded graph. Every forward op
// allocates a fresh node; leaves (parameters, inputs) persist across forward
// passes so their gradients accumulate until zeroed.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first use, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;  // empty for leaves

    Tensor<T>& ensure_grad() {
        if (grad.data.empty()) grad = Tensor<T>(value.shape);
        return grad;
    }
    bool is_leaf() const { return !backward_fn; }
};

template <typename T>
class Var {
  public:
    std::shared_ptr<Node<T>> node;

    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node(std::move(n)) {}

    static Var leaf(Tensor<T> v, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        if (requires_grad) n->ensure_grad();
        return Var(std::move(n));
    }
    static Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

    bool defined() const { return node != nullptr; }
    const Tensor<T>& value() const { return node->value; }
    Tensor<T>& value() { return node->value; }
    const Shape& shape() const { return node->value.shape; }
    Tensor<T>& grad() { return node->ensure_grad(); }
    bool requires_grad() const { return node->requires_grad; }
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
    for (const T& v : t.data) {
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError(std::string(op) + " produced a non-finite value");
    }
}

// Record one op. The backward closure reads n.grad and accumulates into
// n.parents[i]->grad; it may capture forward-pass context by value.
template <typename T, typename F>
Var<T> make_op(const char* name, Tensor<T> value, std::vector<Var<T>> inputs, F&& backward) {
    check_finite(value, name);
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    for (const auto& in : inputs) {
        if (in.node->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) {
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node);
        n->backward_fn = std::forward<F>(backward);
    }
    return Var<T>(std::move(n));
}

template <typename T>
void accumulate_grad(const std::shared_ptr<Node<T>>& n, const Tensor<T>& g) {
    if (!n->requires_grad) return;
    Tensor<T>& dst = n->ensure_grad();
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
}

// Backpropagate from a scalar. Interior node grads are reset on every call;
// leaf grads accumulate across calls until explicitly zeroed.
template <typename T>
void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    shape_str(loss.shape()));
    Node<T>* root = loss.node.get();
    if (!root->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
        Node<T>* n;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node<T>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    // order is a postorder: parents before children, so reverse iteration
    // visits each node before its inputs.
    for (Node<T>* n : order) {
        if (!n->is_leaf()) {
            n->ensure_grad();
            n->grad.fill(T(0));
        } else {
            n->ensure_grad();
        }
    }
    root->grad.data[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// Named learnable tensor; the momentum buffer belongs to SGD state.
template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
    Tensor<T> momentum;

    Parameter() = default;
    Parameter(std::string name_, Tensor<T> init)
        : name(std::move(name_)), var(Var<T>::leaf(std::move(init), true)),
          momentum(var.value().shape) {}

    Tensor<T>& tensor() { return var.value(); }
    const Tensor<T>& tensor() const { return var.value(); }
    Tensor<T>& grad() { return var.grad(); }
};

}  // namespace wlft
