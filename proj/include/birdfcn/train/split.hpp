#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace birdfcn::train {

struct Split {
    std::vector<std::size_t> train;  ///< ascending sample indices
    std::vector<std::size_t> test;   ///< ascending sample indices
    std::vector<std::string> warnings;
};

/// Stratified random split. The held-out total is round(N * (1 - train_fraction)); each class
/// with at least 2 samples keeps at least one on each side, and the remaining held-out slots go
/// to classes by largest remainder. A single-sample class stays in train with a warning.
/// ParameterError on an empty label list or a fraction outside (0, 1).
Split monte_carlo_split(const std::vector<std::size_t>& labels, double train_fraction, std::uint64_t seed);

}  // namespace birdfcn::train
