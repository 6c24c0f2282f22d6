#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "birdfcn/nn/gradcheck.hpp"

namespace birdfcn::model {

/// One layer type's finite-difference comparison at double precision.
struct LayerCheck {
    std::string layer;
    nn::GradCheckReport report;
};

/// Every layer type in isolation (conv 3x3 and 1x1, max-pool, GAP, relu, tanh, adaptive with its
/// slope, dropout in eval mode, softmax + cross-entropy, dense) followed by whole toy-width networks
/// for each activation and the dense head.
std::vector<LayerCheck> run_gradcheck_suite(std::uint64_t seed = 1);

/// Negative control: a conv backward pass with its kernel gradient scaled by 1.5.
/// A working checker reports a large error here.
nn::GradCheckReport fault_injected_check(std::uint64_t seed = 1);

}  // namespace birdfcn::model
