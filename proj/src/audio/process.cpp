#include "birdfcn/audio/process.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "birdfcn/error.hpp"

namespace birdfcn::audio {

namespace {

/// sinc(half * u) * kaiser(u) sampled on u in [0, 1].
std::vector<double> kernel_table(std::size_t half, double beta, std::size_t resolution) {
    std::vector<double> table(resolution + 2, 0.0);
    const double norm = std::cyl_bessel_i(0.0, beta);
    for (std::size_t i = 0; i <= resolution; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(resolution);
        const double x = std::numbers::pi * static_cast<double>(half) * u;
        const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
        const double arg = std::max(0.0, 1.0 - u * u);
        table[i] = sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(arg)) / norm;
    }
    return table;
}

}  // namespace

std::vector<float> resample(std::span<const float> input, int in_rate, int out_rate,
                            const ResamplerParams& params) {
    if (in_rate <= 0 || out_rate <= 0) throw ParameterError("sample rates must be positive");
    if (params.taps < 2 || params.taps % 2 != 0) throw ParameterError("resampler taps must be even and >= 2");
    if (in_rate == out_rate || input.empty()) return {input.begin(), input.end()};

    const std::size_t n = input.size();
    const auto out_len = static_cast<std::size_t>(
        (static_cast<std::uint64_t>(n) * out_rate + static_cast<std::uint64_t>(in_rate) / 2) / in_rate);
    const double cutoff = std::min(1.0, static_cast<double>(out_rate) / in_rate);
    const std::size_t half = params.taps / 2;
    const double reach = static_cast<double>(half) / cutoff;  // kernel half-width in input samples
    constexpr std::size_t kResolution = 8192;
    const auto table = kernel_table(half, params.kaiser_beta, kResolution);

    std::vector<float> out(out_len);
    for (std::size_t j = 0; j < out_len; ++j) {
        const double t = static_cast<double>(static_cast<std::uint64_t>(j) * in_rate) / out_rate;
        const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - reach));
        const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + reach));
        double acc = 0.0, weight_sum = 0.0;
        for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0);
             i <= std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(n) - 1); ++i) {
            const double u = std::abs(t - static_cast<double>(i)) / reach;
            if (u >= 1.0) continue;
            const double pos = u * kResolution;
            const auto k = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(k);
            const double w = table[k] + frac * (table[k + 1] - table[k]);
            acc += w * input[static_cast<std::size_t>(i)];
            weight_sum += w;
        }
        // Dividing by the tap sum keeps unit DC gain, including near the edges where taps are missing.
        out[j] = static_cast<float>(std::abs(weight_sum) > 1e-3 ? acc / weight_sum : acc * cutoff);
    }
    return out;
}

AudioClip normalize_rate(AudioClip clip) {
    for (float v : clip.samples) {
        if (!std::isfinite(v)) throw FormatError("clip '" + clip.source_id + "' contains non-finite samples");
    }
    if (clip.sample_rate != kCanonicalSampleRate) {
        clip.samples = resample(clip.samples, clip.sample_rate, kCanonicalSampleRate);
        clip.sample_rate = kCanonicalSampleRate;
    }
    for (float& v : clip.samples) v = std::clamp(v, -1.0f, 1.0f);
    return clip;
}

namespace {

/// One trimming pass; returns true if anything was removed.
bool trim_pass(AudioClip& clip, const TrimParams& p) {
    const auto& x = clip.samples;
    const std::size_t n = x.size();
    std::vector<std::size_t> starts;
    if (n <= p.frame_len) {
        starts.push_back(0);
    } else {
        for (std::size_t s = 0; s + p.frame_len <= n; s += p.hop) starts.push_back(s);
        if (starts.back() + p.frame_len < n) starts.push_back(n - p.frame_len);
    }
    std::vector<double> power(starts.size(), 0.0);
    double peak = 0.0;
    for (std::size_t f = 0; f < starts.size(); ++f) {
        const std::size_t end = std::min(n, starts[f] + p.frame_len);
        double acc = 0.0;
        for (std::size_t i = starts[f]; i < end; ++i) acc += static_cast<double>(x[i]) * x[i];
        power[f] = acc / static_cast<double>(p.frame_len);
        peak = std::max(peak, power[f]);
    }
    if (peak <= 0.0) throw EmptyResultError("clip '" + clip.source_id + "' is entirely silent");
    const double threshold = peak * std::pow(10.0, -p.top_db / 10.0);

    std::vector<char> removed(n, 0);
    bool any = false;
    for (std::size_t f = 0; f < starts.size(); ++f) {
        if (power[f] >= threshold) continue;
        const std::size_t end = std::min(n, starts[f] + p.frame_len);
        std::fill(removed.begin() + static_cast<std::ptrdiff_t>(starts[f]),
                  removed.begin() + static_cast<std::ptrdiff_t>(end), 1);
        any = true;
    }
    if (!any) return false;

    auto quiet = [&](std::size_t i) { return static_cast<double>(x[i]) * x[i] < threshold; };
    for (std::size_t i = 0; i < n; ++i) {
        if (!removed[i]) continue;
        std::size_t j = i;
        while (j < n && removed[j]) ++j;
        for (std::size_t k = i; k > 0 && !removed[k - 1] && quiet(k - 1); --k) removed[k - 1] = 1;
        for (std::size_t k = j; k < n && !removed[k] && quiet(k); ++k) removed[k] = 1;
        i = j;
    }

    std::vector<float> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!removed[i]) kept.push_back(x[i]);
    }
    if (kept.empty()) throw EmptyResultError("clip '" + clip.source_id + "' is entirely silent");
    clip.samples = std::move(kept);
    return true;
}

}  // namespace

AudioClip trim_silence(const AudioClip& clip, const TrimParams& params) {
    if (!(params.top_db > 0.0)) throw ParameterError("top_db must be positive");
    if (params.frame_len == 0 || params.hop == 0) throw ParameterError("trim frame and hop must be positive");
    if (clip.samples.empty()) throw EmptyResultError("clip '" + clip.source_id + "' is empty");
    AudioClip out = clip;
    while (trim_pass(out, params)) {
    }
    return out;
}

AudioClip cap_duration(const AudioClip& clip, double max_seconds) {
    if (!(max_seconds > 0.0)) throw ParameterError("max_seconds must be positive");
    const auto limit = static_cast<std::size_t>(std::llround(max_seconds * clip.sample_rate));
    AudioClip out = clip;
    if (out.samples.size() > limit) out.samples.resize(limit);
    return out;
}

AudioClip pad_to_length(const AudioClip& clip, std::size_t target_samples) {
    if (target_samples < clip.samples.size()) {
        throw ParameterError("pad target " + std::to_string(target_samples) + " is shorter than clip (" +
                             std::to_string(clip.samples.size()) + " samples)");
    }
    AudioClip out = clip;
    out.samples.resize(target_samples, 0.0f);
    return out;
}

}  // namespace birdfcn::audio
