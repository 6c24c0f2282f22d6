#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "birdfcn/audio/clip.hpp"

namespace birdfcn::audio {

enum class SampleFormat { kPcm16, kFloat32 };

struct WavInfo {
    SampleFormat format = SampleFormat::kPcm16;
    int channels = 1;
    int sample_rate = kCanonicalSampleRate;
    std::size_t frames = 0;  ///< samples per channel

    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0;
    }
};

/// Decoded PCM with channels kept separate and samples scaled to [-1, 1].
struct WavData {
    WavInfo info;
    std::vector<std::vector<float>> channels;
};

/// Parses only the RIFF header and chunk table.
WavInfo read_wav_info(const std::filesystem::path& path);

/// PCM 16-bit or IEEE float 32-bit, 1 or 2 channels, plain or WAVE_FORMAT_EXTENSIBLE.
/// FormatError for anything else, IoError for truncation.
WavData read_wav(const std::filesystem::path& path);

/// Writes one buffer per channel; all buffers must have the same length.
void write_wav(const std::filesystem::path& path, const std::vector<std::vector<float>>& channels,
               int sample_rate, SampleFormat format = SampleFormat::kPcm16);

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               SampleFormat format = SampleFormat::kPcm16);

/// Decode, average to mono, resample to 44.1 kHz and clamp to [-1, 1].
AudioClip decode_audio(const std::filesystem::path& path);

}  // namespace birdfcn::audio
