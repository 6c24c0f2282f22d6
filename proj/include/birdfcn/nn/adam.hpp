#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "birdfcn/nn/graph.hpp"

namespace birdfcn::nn {

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment accumulators, one pair per parameter tensor, plus the shared
/// step counter. Moments are allocated on the first step.
template <typename T>
struct AdamState {
    AdamConfig config;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update of `params` in place.
template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state);

/// Convenience overload reading gradients from parameter nodes. Parameters that never
/// received a gradient are treated as having a zero gradient.
template <typename T>
void adam_step(const std::vector<Var<T>>& params, AdamState<T>& state);

extern template void adam_step<float>(std::span<const std::span<float>>,
                                      std::span<const std::span<const float>>, AdamState<float>&);
extern template void adam_step<double>(std::span<const std::span<double>>,
                                       std::span<const std::span<const double>>,
                                       AdamState<double>&);
extern template void adam_step<float>(const std::vector<Var<float>>&, AdamState<float>&);
extern template void adam_step<double>(const std::vector<Var<double>>&, AdamState<double>&);

}  // namespace birdfcn::nn
