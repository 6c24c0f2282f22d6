#pragma once

#include <cmath>
#include <random>

#include "birdfcn/nn/tensor.hpp"

namespace birdfcn::nn {

/// Uniform in +/- sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& tensor, std::size_t fan_in, std::size_t fan_out,
                    std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : tensor.data()) v = static_cast<T>(dist(rng));
}

}  // namespace birdfcn::nn
