#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "birdfcn/audio/clip.hpp"
#include "birdfcn/dsp/fft.hpp"

namespace birdfcn::dsp {

inline constexpr double kEnergyFloor = 1e-10;
inline constexpr double kDecibelFloor = -100.0;

struct FrameParams {
    std::size_t window_len = 882;
    std::size_t hop = 441;
    std::size_t fft_size = 1024;

    /// Throws ParameterError unless hop <= window_len <= fft_size and fft_size is a power of two.
    void validate() const;

    /// 1 + floor((num_samples - window_len) / hop); zero when the clip is shorter than a window.
    std::size_t frame_count(std::size_t num_samples) const;

    /// Smallest sample count that yields `frames` frames.
    std::size_t samples_for_frames(std::size_t frames) const;

    bool operator==(const FrameParams&) const = default;
};

enum class FeatureKind { kMelDb, kMfcc };

std::string to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

/// Value a band takes in a silent frame: the dB floor for mel, zero for mfcc.
double silence_value(FeatureKind kind);

/// Row-major (bands x frames) feature grid.
struct FeatureMatrix {
    FeatureKind kind = FeatureKind::kMelDb;
    std::size_t bands = 0;
    std::size_t frames = 0;
    std::vector<double> values;
    FrameParams frame_params;
    int sample_rate = audio::kCanonicalSampleRate;

    double& at(std::size_t band, std::size_t frame) { return values[band * frames + frame]; }
    double at(std::size_t band, std::size_t frame) const { return values[band * frames + frame]; }

    /// Frames [begin, end) as a new matrix.
    FeatureMatrix slice_frames(std::size_t begin, std::size_t end) const;

    /// Copy extended to `target` frames, filling new columns with `fill`. No-op if already long enough.
    FeatureMatrix padded_to(std::size_t target, double fill) const;
};

// ---- pipeline stages ----

std::vector<double> preemphasis(std::span<const double> samples, double b);

/// w[i] = 0.54 - 0.46 cos(2 pi i / (L - 1)).
std::vector<double> hamming_window(std::size_t length);

/// Windowed frames, each zero-padded to fft_size.
std::vector<std::vector<double>> frame_and_window(std::span<const double> samples,
                                                  const FrameParams& fp);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
    std::size_t n_mels = 0;
    std::size_t fft_size = 0;
    int sample_rate = 0;
    double fmin = 0.0;
    double fmax = 0.0;
    /// n_mels + 2 edge frequencies in Hz, equally spaced on the mel axis.
    std::vector<double> edges_hz;
    /// (n_mels x (fft_size/2 + 1)) row-major.
    std::vector<double> weights;
    /// Half-open nonzero bin range per filter.
    std::vector<std::pair<std::size_t, std::size_t>> support;

    std::size_t bins() const { return fft_size / 2 + 1; }
    double weight(std::size_t m, std::size_t k) const { return weights[m * bins() + k]; }
    double center_hz(std::size_t m) const { return edges_hz[m + 1]; }

    /// The continuous triangle of filter m evaluated at `hz`.
    double filter_response(std::size_t m, double hz) const;
};

MelFilterbank build_filterbank(std::size_t n_mels, const FrameParams& fp, int sample_rate,
                               double fmin, double fmax);

/// E[m] = sum_k power[k] * weights[m][k]^2.
std::vector<double> filterbank_energies(std::span<const double> power, const MelFilterbank& fb);

/// C[m] = sum_k log_e[k] cos(m (k + 1/2) pi / M), m = 1..n_mfcc.
std::vector<double> dct_cepstrum(std::span<const double> log_energies, std::size_t n_mfcc);

// ---- full descriptors ----

FeatureMatrix mel_spectrogram(const audio::AudioClip& clip, const FrameParams& fp,
                              const MelFilterbank& fb);

FeatureMatrix mfcc(const audio::AudioClip& clip, const FrameParams& fp, const MelFilterbank& fb,
                   double b, std::size_t n_mfcc);

struct FeatureConfig {
    FeatureKind kind = FeatureKind::kMelDb;
    FrameParams frame_params;
    std::size_t n_mels = 128;
    double fmin = 0.0;
    double fmax = 22050.0;
    double preemphasis = 0.97;
    std::size_t n_mfcc = 20;
    int sample_rate = audio::kCanonicalSampleRate;

    void validate() const;
    std::size_t bands() const { return kind == FeatureKind::kMfcc ? n_mfcc : n_mels; }
    /// Stable single-line description, used in cache keys and model headers.
    std::string describe() const;
    static FeatureConfig parse(const std::string& description);

    bool operator==(const FeatureConfig&) const = default;
};

/// Holds a prebuilt filterbank so repeated extraction does not rebuild it.
class FeatureExtractor {
public:
    explicit FeatureExtractor(FeatureConfig config);

    const FeatureConfig& config() const { return config_; }
    const MelFilterbank& filterbank() const { return filterbank_; }

    FeatureMatrix operator()(const audio::AudioClip& clip) const;

private:
    FeatureConfig config_;
    MelFilterbank filterbank_;
};

/// Per-band mean and standard deviation (ddof 0) fitted on a training set.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool fitted() const { return !mean.empty(); }

    static Standardizer fit(std::span<const FeatureMatrix* const> matrices);
    void apply(FeatureMatrix& matrix) const;
    /// What a raw value of `raw` in `band` becomes after apply().
    double transform(std::size_t band, double raw) const;
};

}  // namespace birdfcn::dsp
