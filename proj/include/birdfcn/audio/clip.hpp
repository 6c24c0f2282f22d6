#pragma once

#include <optional>
#include <string>
#include <vector>

namespace birdfcn::audio {

inline constexpr int kCanonicalSampleRate = 44100;

/// Mono sample buffer in [-1, 1] with its rate and provenance.
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kCanonicalSampleRate;
    std::string source_id;
    std::optional<std::string> species;

    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

}  // namespace birdfcn::audio
