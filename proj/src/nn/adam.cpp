#include "birdfcn/nn/adam.hpp"

#include <cmath>

namespace birdfcn::nn {

template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty() && state.v.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), T{0});
            state.v.emplace_back(p.size(), T{0});
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks a different parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size() ||
            state.v[i].size() != params[i].size()) {
            throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
        }
    }

    const AdamConfig& cfg = state.config;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
    const T correction2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
    const T alpha = static_cast<T>(cfg.alpha);
    const T eps = static_cast<T>(cfg.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        T* p = params[i].data();
        const T* g = grads[i].data();
        T* m = state.m[i].data();
        T* v = state.v[i].data();
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            m[j] = b1 * m[j] + (T{1} - b1) * g[j];
            v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
            const T m_hat = m[j] / correction1;
            const T v_hat = v[j] / correction2;
            p[j] -= alpha * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template <typename T>
void adam_step(const std::vector<Var<T>>& params, AdamState<T>& state) {
    std::vector<std::span<T>> values;
    std::vector<std::span<const T>> grads;
    values.reserve(params.size());
    grads.reserve(params.size());
    for (const auto& p : params) {
        if (!p) throw GraphError("adam_step: missing parameter node");
        values.push_back(p->value.data());
        grads.push_back(p->value.grad());
    }
    adam_step<T>(std::span<const std::span<T>>(values), std::span<const std::span<const T>>(grads),
                 state);
}

template void adam_step<float>(std::span<const std::span<float>>,
                               std::span<const std::span<const float>>, AdamState<float>&);
template void adam_step<double>(std::span<const std::span<double>>,
                                std::span<const std::span<const double>>, AdamState<double>&);
template void adam_step<float>(const std::vector<Var<float>>&, AdamState<float>&);
template void adam_step<double>(const std::vector<Var<double>>&, AdamState<double>&);

}  // namespace birdfcn::nn
