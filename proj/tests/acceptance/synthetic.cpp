#include "synthetic.hpp"

#include <cmath>
#include <numbers>

namespace birdfcn::acceptance {

namespace {

/// Instantaneous frequency of one syllable at fraction u in [0, 1).
double pitch(std::size_t label, double u, double lo, double hi, bool high_note) {
    switch (label) {
        case 0: return lo + (hi - lo) * u;
        case 1: return hi - (hi - lo) * u;
        case 2: return u < 0.5 ? lo + (hi - lo) * 2 * u : hi - (hi - lo) * (2 * u - 1);
        default: return high_note ? hi : lo;
    }
}

}  // namespace

std::vector<float> signature(std::size_t label, double seconds, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto n = static_cast<std::size_t>(seconds * kRate);
    std::vector<float> x(n, 0.0f);
    std::size_t pos = static_cast<std::size_t>(unit(rng) * 0.1 * kRate);
    bool high_note = unit(rng) < 0.5;
    while (pos < n) {
        const double lo = 2000.0 * (0.9 + 0.2 * unit(rng));
        const double hi = 6000.0 * (0.9 + 0.2 * unit(rng));
        const double len = (label == 3 ? 0.08 : 0.25) * (0.8 + 0.4 * unit(rng));
        const auto m = static_cast<std::size_t>(len * kRate);
        double phase = 2 * std::numbers::pi * unit(rng);
        for (std::size_t i = 0; i < m && pos + i < n; ++i) {
            const double u = static_cast<double>(i) / static_cast<double>(m);
            phase += 2 * std::numbers::pi * pitch(label, u, lo, hi, high_note) / kRate;
            const double envelope = std::sin(std::numbers::pi * u);
            x[pos + i] = static_cast<float>(0.5 * envelope * std::sin(phase));
        }
        high_note = !high_note;
        const double gap = (label == 3 ? 0.03 : 0.1) * (0.8 + 0.4 * unit(rng));
        pos += m + static_cast<std::size_t>(gap * kRate);
    }
    return x;
}

void add_noise(std::vector<float>& x, double snr_db, std::mt19937_64& rng) {
    double power = 0.0;
    for (float v : x) power += static_cast<double>(v) * v;
    power /= static_cast<double>(x.size());
    std::normal_distribution<double> noise(0.0, std::sqrt(power / std::pow(10.0, snr_db / 10.0)));
    for (auto& v : x) v = static_cast<float>(v + noise(rng));
}

std::vector<train::LabeledClip> synthetic_clips(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> length(spec.min_seconds, spec.max_seconds);
    std::vector<train::LabeledClip> out;
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        for (std::size_t c = 0; c < kSyntheticLabels.size(); ++c) {
            train::LabeledClip lc;
            lc.label = c;
            lc.clip.samples = signature(c, length(rng), rng);
            add_noise(lc.clip.samples, spec.snr_db, rng);
            lc.clip.source_id = kSyntheticLabels[c] + "-" + std::to_string(i);
            out.push_back(std::move(lc));
        }
    }
    return out;
}

}  // namespace birdfcn::acceptance
