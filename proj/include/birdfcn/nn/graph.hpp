#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "birdfcn/nn/tensor.hpp"

namespace birdfcn::nn {

template <typename T>
struct Node;

/// Handle to a value recorded in the differentiation graph.
template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// One recorded value. `backward_fn` reads `value.grad()` (the upstream gradient)
/// and accumulates into the gradients of `parents` that require them.
template <typename T>
struct Node {
    Tensor<T> value;
    std::vector<Var<T>> parents;
    std::function<void(Node<T>&)> backward_fn;
    bool requires_grad = false;
    bool trainable = false;
    std::string name;
};

/// Constant input; never receives a gradient.
template <typename T>
Var<T> constant(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    return node;
}

/// Trainable leaf. Gradients accumulate across backward passes until zeroed.
template <typename T>
Var<T> parameter(Tensor<T> value, std::string name = {}) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->trainable = true;
    node->name = std::move(name);
    return node;
}

/// Leaf that records a gradient but is not trainable (used to check input gradients).
template <typename T>
Var<T> watched(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = true;
    return node;
}

/// Records an op result. The node requires a gradient iff any parent does.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    for (const auto& parent : parents) {
        if (!parent) {
            throw GraphError("op recorded with a missing parent node");
        }
        node->requires_grad = node->requires_grad || parent->requires_grad;
    }
    node->parents = std::move(parents);
    if (node->requires_grad) {
        node->backward_fn = std::move(backward_fn);
    }
    return node;
}

/// Reverse-mode sweep from a scalar loss. Populates gradients of every node that
/// requires one; trainable leaves accumulate.
template <typename T>
void backward(const Var<T>& loss);

extern template void backward<float>(const Var<float>&);
extern template void backward<double>(const Var<double>&);

}  // namespace birdfcn::nn
