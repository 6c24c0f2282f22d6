#pragma once

#include <functional>
#include <string>
#include <vector>

#include "birdfcn/nn/graph.hpp"

namespace birdfcn::nn {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Elements whose +/- probes crossed a relu or max-pool branch point.
    std::size_t skipped = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_error() const;
    bool passed(double tolerance) const { return max_rel_error() <= tolerance; }
};

struct GradCheckOptions {
    double step = 1e-5;
    /// Denominator floor of the relative error, so vanishing gradients compare absolutely.
    double denominator_floor = 1e-6;
    /// 0 checks every element; otherwise at most this many evenly strided elements.
    std::size_t max_elements_per_tensor = 0;
};

/// Compares analytic gradients of `loss_fn` with central finite differences for every
/// node in `inputs` (parameters or watched leaves). `loss_fn` must rebuild the graph from
/// the current leaf values on every call and be deterministic.
GradCheckReport gradient_check(const std::function<Var<double>()>& loss_fn,
                               const std::vector<Var<double>>& inputs,
                               const GradCheckOptions& options = {});

}  // namespace birdfcn::nn
