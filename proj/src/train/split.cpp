#include "birdfcn/train/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "birdfcn/error.hpp"

namespace birdfcn::train {

Split monte_carlo_split(const std::vector<std::size_t>& labels, double train_fraction, std::uint64_t seed) {
    if (labels.empty()) throw ParameterError("cannot split an empty dataset");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ParameterError("train fraction must lie in (0, 1)");
    }
    const std::size_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> members(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

    Split split;
    const double held = 1.0 - train_fraction;
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(labels.size()) * held));

    // Floor allocation clamped to [1, n-1], then largest remainders fill the gap to the target.
    std::vector<std::size_t> take(n_classes, 0);
    std::vector<double> remainder(n_classes, -1.0);
    std::size_t allocated = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const std::size_t n = members[c].size();
        if (n == 0) continue;
        if (n == 1) {
            split.warnings.push_back("class " + std::to_string(c) + " has a single sample; kept in train");
            continue;
        }
        const double exact = static_cast<double>(n) * held;
        take[c] = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(exact)), 1, n - 1);
        remainder[c] = exact - std::floor(exact);
        allocated += take[c];
    }
    std::vector<std::size_t> order(n_classes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (bool progress = true; allocated < target && progress;) {
        progress = false;
        for (std::size_t c : order) {
            if (allocated >= target) break;
            if (remainder[c] < 0.0 || take[c] + 1 >= members[c].size()) continue;
            ++take[c];
            ++allocated;
            progress = true;
        }
    }

    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto idx = members[c];
        std::shuffle(idx.begin(), idx.end(), rng);
        split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
        split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

}  // namespace birdfcn::train
