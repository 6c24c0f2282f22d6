#include "birdfcn/nn/graph.hpp"

#include <unordered_map>

namespace birdfcn::nn {

namespace {

enum class Mark { kVisiting, kDone };

// Iterative post-order DFS; a back edge to a node still on the stack is a cycle.
template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_map<Node<T>*, Mark> marks;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    marks[root] = Mark::kVisiting;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent == nullptr) {
                throw GraphError("graph references a missing node");
            }
            if (!parent->requires_grad) {
                continue;
            }
            auto it = marks.find(parent);
            if (it == marks.end()) {
                marks[parent] = Mark::kVisiting;
                stack.emplace_back(parent, 0);
            } else if (it->second == Mark::kVisiting) {
                throw GraphError("computation graph contains a cycle");
            }
        } else {
            marks[node] = Mark::kDone;
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

template <typename T>
void backward(const Var<T>& loss) {
    if (!loss) {
        throw GraphError("backward called on a missing node");
    }
    if (loss->value.size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " +
                         shape_string(loss->value.shape()));
    }
    if (!loss->requires_grad) {
        return;
    }
    auto order = topological_order(loss.get());
    // Intermediate gradients start from zero on every sweep; trainable leaves keep
    // what they accumulated.
    for (Node<T>* node : order) {
        if (!node->trainable) {
            node->value.clear_grad();
        }
    }
    loss->value.grad()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn) {
            node->value.grad();
            node->backward_fn(*node);
        }
    }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace birdfcn::nn
