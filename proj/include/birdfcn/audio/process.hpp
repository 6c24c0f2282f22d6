#pragma once

#include <span>
#include <vector>

#include "birdfcn/audio/clip.hpp"

namespace birdfcn::audio {

struct ResamplerParams {
    std::size_t taps = 64;
    double kaiser_beta = 8.6;
};

/// Kaiser-windowed sinc interpolation. The cutoff is min(1, out/in) of the input Nyquist
/// so downsampling is band-limited first.
std::vector<float> resample(std::span<const float> input, int in_rate, int out_rate,
                            const ResamplerParams& params = {});

/// Resample to 44.1 kHz if needed, clamp to [-1, 1]; FormatError on non-finite samples.
AudioClip normalize_rate(AudioClip clip);

struct TrimParams {
    double top_db = 60.0;
    std::size_t frame_len = 2048;
    std::size_t hop = 512;
};

/// Drops every stretch covered by an analysis frame whose mean power sits more than top_db
/// below the loudest frame, then concatenates what is left. The removed stretches are widened
/// sample by sample while the neighbouring samples stay under the same threshold. Repeats until
/// nothing changes, so applying it twice equals applying it once.
/// EmptyResultError when the clip is empty or entirely silent.
AudioClip trim_silence(const AudioClip& clip, const TrimParams& params = {});

inline constexpr double kDefaultMaxSeconds = 20.0;

/// Keeps only the first max_seconds.
AudioClip cap_duration(const AudioClip& clip, double max_seconds = kDefaultMaxSeconds);

/// Appends zeros up to target_samples; ParameterError if the clip is already longer.
AudioClip pad_to_length(const AudioClip& clip, std::size_t target_samples);

}  // namespace birdfcn::audio
