#include "birdfcn/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "birdfcn/nn/ops.hpp"

namespace birdfcn::nn {

double GradCheckReport::max_rel_error() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
    return worst;
}

namespace {

struct TracedLoss {
    double value;
    std::vector<std::uint32_t> branches;
};

TracedLoss evaluate(const std::function<Var<double>()>& loss_fn) {
    detail::BranchTrace trace;
    auto*& slot = detail::active_branch_trace();
    auto* saved = slot;
    slot = &trace;
    try {
        Var<double> loss = loss_fn();
        slot = saved;
        return {loss->value[0], std::move(trace.codes)};
    } catch (...) {
        slot = saved;
        throw;
    }
}

}  // namespace

GradCheckReport gradient_check(const std::function<Var<double>()>& loss_fn,
                               const std::vector<Var<double>>& inputs,
                               const GradCheckOptions& options) {
    for (const auto& input : inputs) {
        if (!input) throw GraphError("gradient_check: missing input node");
        input->value.zero_grad();
    }
    const TracedLoss baseline = evaluate(loss_fn);
    {
        Var<double> loss = loss_fn();
        backward(loss);
    }

    GradCheckReport report;
    for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
        Node<double>& node = *inputs[idx];
        GradCheckEntry entry;
        entry.name = node.name.empty() ? "input" + std::to_string(idx) : node.name;
        const std::vector<double> analytic(node.value.grad().begin(), node.value.grad().end());
        const std::size_t n = node.value.size();
        std::size_t stride = 1;
        if (options.max_elements_per_tensor > 0 && n > options.max_elements_per_tensor) {
            stride = (n + options.max_elements_per_tensor - 1) / options.max_elements_per_tensor;
        }
        for (std::size_t j = 0; j < n; j += stride) {
            const double saved = node.value[j];
            node.value[j] = saved + options.step;
            const TracedLoss plus = evaluate(loss_fn);
            node.value[j] = saved - options.step;
            const TracedLoss minus = evaluate(loss_fn);
            node.value[j] = saved;
            if (plus.branches != baseline.branches || minus.branches != baseline.branches) {
                ++entry.skipped;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * options.step);
            const double denom = std::max({std::abs(analytic[j]), std::abs(numeric),
                                           options.denominator_floor});
            entry.max_rel_error =
                std::max(entry.max_rel_error, std::abs(analytic[j] - numeric) / denom);
            ++entry.checked;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace birdfcn::nn
