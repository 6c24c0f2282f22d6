#include "birdfcn/dsp/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "birdfcn/error.hpp"

namespace birdfcn::dsp {

void FrameParams::validate() const {
    if (window_len == 0 || hop == 0) throw ParameterError("window length and hop must be positive");
    if (hop > window_len) throw ParameterError("hop must not exceed the window length");
    if (fft_size < window_len) throw ParameterError("FFT size must be at least the window length");
    if (!is_power_of_two(fft_size)) throw ParameterError("FFT size must be a power of two");
}

std::size_t FrameParams::frame_count(std::size_t num_samples) const {
    if (num_samples < window_len) return 0;
    return 1 + (num_samples - window_len) / hop;
}

std::size_t FrameParams::samples_for_frames(std::size_t frames) const {
    if (frames == 0) return 0;
    return window_len + (frames - 1) * hop;
}

std::string to_string(FeatureKind kind) {
    return kind == FeatureKind::kMfcc ? "mfcc" : "mel-db";
}

FeatureKind feature_kind_from_string(const std::string& name) {
    if (name == "mel-db" || name == "mel") return FeatureKind::kMelDb;
    if (name == "mfcc") return FeatureKind::kMfcc;
    throw ParameterError("unknown feature kind '" + name + "' (expected mel-db or mfcc)");
}

double silence_value(FeatureKind kind) {
    return kind == FeatureKind::kMfcc ? 0.0 : kDecibelFloor;
}

FeatureMatrix FeatureMatrix::slice_frames(std::size_t begin, std::size_t end) const {
    if (begin > end || end > frames) {
        throw IndexError("frame slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + std::to_string(frames) + " frames");
    }
    FeatureMatrix out = *this;
    out.frames = end - begin;
    out.values.assign(bands * out.frames, 0.0);
    for (std::size_t b = 0; b < bands; ++b) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(b * frames + begin), out.frames,
                    out.values.begin() + static_cast<std::ptrdiff_t>(b * out.frames));
    }
    return out;
}

FeatureMatrix FeatureMatrix::padded_to(std::size_t target, double fill) const {
    if (frames >= target) return *this;
    FeatureMatrix out = *this;
    out.frames = target;
    out.values.assign(bands * target, fill);
    for (std::size_t b = 0; b < bands; ++b) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(b * frames), frames,
                    out.values.begin() + static_cast<std::ptrdiff_t>(b * target));
    }
    return out;
}

std::vector<double> preemphasis(std::span<const double> samples, double b) {
    if (!(b >= 0.4 && b <= 1.0)) {
        throw ParameterError("preemphasis coefficient must lie in [0.4, 1], got " +
                             std::to_string(b));
    }
    std::vector<double> out(samples.size());
    if (samples.empty()) return out;
    out[0] = samples[0];
    for (std::size_t n = 1; n < samples.size(); ++n) out[n] = samples[n] - b * samples[n - 1];
    return out;
}

std::vector<double> hamming_window(std::size_t length) {
    std::vector<double> w(length, 1.0);
    if (length < 2) return w;
    const double denom = static_cast<double>(length - 1);
    for (std::size_t i = 0; i < length; ++i) {
        w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    }
    return w;
}

namespace {

void require_one_window(std::size_t num_samples, const FrameParams& fp) {
    if (num_samples < fp.window_len) {
        throw DegenerateInputError("clip has " + std::to_string(num_samples) +
                                   " samples, fewer than one window of " +
                                   std::to_string(fp.window_len));
    }
}

/// Streams windowed frames through the FFT and hands each power spectrum to `sink`.
template <typename Sink>
void for_each_power_frame(std::span<const double> samples, const FrameParams& fp, Sink&& sink) {
    fp.validate();
    require_one_window(samples.size(), fp);
    const FftPlan plan(fp.fft_size);
    const auto window = hamming_window(fp.window_len);
    const std::size_t frames = fp.frame_count(samples.size());
    std::vector<Complex> buffer(fp.fft_size);
    std::vector<double> power(fp.fft_size / 2 + 1);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * fp.hop;
        for (std::size_t i = 0; i < fp.window_len; ++i) buffer[i] = samples[start + i] * window[i];
        std::fill(buffer.begin() + static_cast<std::ptrdiff_t>(fp.window_len), buffer.end(),
                  Complex{});
        plan.forward(buffer);
        for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buffer[k]);
        sink(t, std::span<const double>(power));
    }
}

std::vector<double> to_double(const std::vector<float>& samples) {
    return {samples.begin(), samples.end()};
}

void check_rate(const audio::AudioClip& clip, const MelFilterbank& fb) {
    if (clip.sample_rate != fb.sample_rate) {
        throw ParameterError("clip sample rate " + std::to_string(clip.sample_rate) +
                             " Hz differs from filterbank rate " + std::to_string(fb.sample_rate));
    }
}

void check_fft(const FrameParams& fp, const MelFilterbank& fb) {
    if (fp.fft_size != fb.fft_size) {
        throw ShapeError("filterbank built for FFT size " + std::to_string(fb.fft_size) +
                         ", frames use " + std::to_string(fp.fft_size));
    }
}

}  // namespace

std::vector<std::vector<double>> frame_and_window(std::span<const double> samples,
                                                  const FrameParams& fp) {
    fp.validate();
    require_one_window(samples.size(), fp);
    const auto window = hamming_window(fp.window_len);
    const std::size_t frames = fp.frame_count(samples.size());
    std::vector<std::vector<double>> out(frames, std::vector<double>(fp.fft_size, 0.0));
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * fp.hop;
        for (std::size_t i = 0; i < fp.window_len; ++i) out[t][i] = samples[start + i] * window[i];
    }
    return out;
}

double hz_to_mel(double hz) {
    if (!(hz >= 0.0)) throw ParameterError("frequency must be nonnegative, got " + std::to_string(hz));
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
    if (!(mel >= 0.0)) throw ParameterError("mel value must be nonnegative, got " + std::to_string(mel));
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

double MelFilterbank::filter_response(std::size_t m, double hz) const {
    const double lo = edges_hz[m];
    const double mid = edges_hz[m + 1];
    const double hi = edges_hz[m + 2];
    const double height = 2.0 / (hi - lo);
    if (hz <= lo || hz >= hi) return 0.0;
    if (hz <= mid) return height * (hz - lo) / (mid - lo);
    return height * (hi - hz) / (hi - mid);
}

MelFilterbank build_filterbank(std::size_t n_mels, const FrameParams& fp, int sample_rate,
                               double fmin, double fmax) {
    fp.validate();
    if (n_mels < 2) throw ParameterError("filterbank needs at least 2 filters");
    if (sample_rate <= 0) throw ParameterError("sample rate must be positive");
    if (fmax > sample_rate / 2.0) {
        throw ParameterError("fmax " + std::to_string(fmax) + " Hz exceeds Nyquist " +
                             std::to_string(sample_rate / 2.0));
    }
    if (!(fmin >= 0.0 && fmin < fmax)) throw ParameterError("filterbank needs 0 <= fmin < fmax");

    MelFilterbank fb;
    fb.n_mels = n_mels;
    fb.fft_size = fp.fft_size;
    fb.sample_rate = sample_rate;
    fb.fmin = fmin;
    fb.fmax = fmax;

    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    const double step = (mel_hi - mel_lo) / static_cast<double>(n_mels + 1);
    fb.edges_hz.resize(n_mels + 2);
    for (std::size_t i = 0; i < n_mels + 2; ++i) {
        fb.edges_hz[i] = mel_to_hz(mel_lo + step * static_cast<double>(i));
    }
    fb.edges_hz.front() = fmin;
    fb.edges_hz.back() = fmax;

    const std::size_t bins = fb.bins();
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fp.fft_size);
    fb.weights.assign(n_mels * bins, 0.0);
    fb.support.assign(n_mels, {0, 0});
    for (std::size_t m = 0; m < n_mels; ++m) {
        std::size_t first = bins;
        std::size_t last = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double w = fb.filter_response(m, static_cast<double>(k) * bin_hz);
            fb.weights[m * bins + k] = w;
            if (w > 0.0) {
                first = std::min(first, k);
                last = k + 1;
            }
        }
        fb.support[m] = first < last ? std::pair{first, last} : std::pair{std::size_t{0}, std::size_t{0}};
    }
    return fb;
}

std::vector<double> filterbank_energies(std::span<const double> power, const MelFilterbank& fb) {
    if (power.size() != fb.bins()) {
        throw ShapeError("power spectrum has " + std::to_string(power.size()) +
                         " bins, filterbank expects " + std::to_string(fb.bins()));
    }
    std::vector<double> energies(fb.n_mels, 0.0);
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
        const auto [first, last] = fb.support[m];
        const double* row = fb.weights.data() + m * fb.bins();
        double acc = 0.0;
        for (std::size_t k = first; k < last; ++k) acc += power[k] * row[k] * row[k];
        energies[m] = acc;
    }
    return energies;
}

std::vector<double> dct_cepstrum(std::span<const double> log_energies, std::size_t n_mfcc) {
    const std::size_t bands = log_energies.size();
    if (n_mfcc < 1 || n_mfcc > bands) {
        throw ParameterError("n_mfcc must lie in [1, " + std::to_string(bands) + "], got " +
                             std::to_string(n_mfcc));
    }
    std::vector<double> out(n_mfcc, 0.0);
    const double scale = std::numbers::pi / static_cast<double>(bands);
    for (std::size_t i = 0; i < n_mfcc; ++i) {
        const double m = static_cast<double>(i + 1);
        double acc = 0.0;
        for (std::size_t k = 0; k < bands; ++k) {
            acc += log_energies[k] * std::cos(m * (static_cast<double>(k) + 0.5) * scale);
        }
        out[i] = acc;
    }
    return out;
}

FeatureMatrix mel_spectrogram(const audio::AudioClip& clip, const FrameParams& fp,
                              const MelFilterbank& fb) {
    check_rate(clip, fb);
    check_fft(fp, fb);
    const auto samples = to_double(clip.samples);

    FeatureMatrix out;
    out.kind = FeatureKind::kMelDb;
    out.bands = fb.n_mels;
    out.frames = fp.frame_count(samples.size());
    out.frame_params = fp;
    out.sample_rate = clip.sample_rate;
    out.values.assign(out.bands * out.frames, 0.0);

    double reference = kDecibelFloor;
    for_each_power_frame(samples, fp, [&](std::size_t t, std::span<const double> power) {
        const auto energies = filterbank_energies(power, fb);
        for (std::size_t m = 0; m < fb.n_mels; ++m) {
            const double db = 10.0 * std::log10(std::max(energies[m], kEnergyFloor));
            out.at(m, t) = db;
            reference = std::max(reference, db);
        }
    });
    // A clip whose every energy sits on the floor stays at the floor instead of being lifted to 0 dB.
    if (reference > kDecibelFloor) {
        for (double& v : out.values) v = std::max(v - reference, kDecibelFloor);
    } else {
        std::fill(out.values.begin(), out.values.end(), kDecibelFloor);
    }
    return out;
}

FeatureMatrix mfcc(const audio::AudioClip& clip, const FrameParams& fp, const MelFilterbank& fb,
                   double b, std::size_t n_mfcc) {
    check_rate(clip, fb);
    check_fft(fp, fb);
    if (n_mfcc < 1 || n_mfcc > fb.n_mels) {
        throw ParameterError("n_mfcc must lie in [1, " + std::to_string(fb.n_mels) + "]");
    }
    const auto raw = to_double(clip.samples);
    const auto emphasized = preemphasis(raw, b);

    FeatureMatrix out;
    out.kind = FeatureKind::kMfcc;
    out.bands = n_mfcc;
    out.frames = fp.frame_count(emphasized.size());
    out.frame_params = fp;
    out.sample_rate = clip.sample_rate;
    out.values.assign(out.bands * out.frames, 0.0);

    std::vector<double> log_energies(fb.n_mels);
    for_each_power_frame(emphasized, fp, [&](std::size_t t, std::span<const double> power) {
        const auto energies = filterbank_energies(power, fb);
        for (std::size_t m = 0; m < fb.n_mels; ++m) {
            log_energies[m] = std::log(std::max(energies[m], kEnergyFloor));
        }
        const auto coeffs = dct_cepstrum(log_energies, n_mfcc);
        for (std::size_t c = 0; c < n_mfcc; ++c) out.at(c, t) = coeffs[c];
    });
    return out;
}

void FeatureConfig::validate() const {
    frame_params.validate();
    if (n_mels < 2) throw ParameterError("n_mels must be at least 2");
    if (kind == FeatureKind::kMfcc && (n_mfcc < 1 || n_mfcc > n_mels)) {
        throw ParameterError("n_mfcc must lie in [1, n_mels]");
    }
    if (!(preemphasis >= 0.4 && preemphasis <= 1.0)) {
        throw ParameterError("preemphasis coefficient must lie in [0.4, 1]");
    }
    if (sample_rate <= 0) throw ParameterError("sample rate must be positive");
    if (fmax > sample_rate / 2.0) throw ParameterError("fmax exceeds Nyquist");
    if (!(fmin >= 0.0 && fmin < fmax)) throw ParameterError("need 0 <= fmin < fmax");
}

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string FeatureConfig::describe() const {
    std::ostringstream os;
    os << "kind=" << to_string(kind) << " window=" << frame_params.window_len
       << " hop=" << frame_params.hop << " fft=" << frame_params.fft_size << " n_mels=" << n_mels
       << " fmin=" << format_double(fmin) << " fmax=" << format_double(fmax)
       << " preemphasis=" << format_double(preemphasis) << " n_mfcc=" << n_mfcc
       << " sample_rate=" << sample_rate;
    return os.str();
}

FeatureConfig FeatureConfig::parse(const std::string& description) {
    std::map<std::string, std::string> fields;
    std::istringstream is(description);
    std::string token;
    while (is >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw FormatError("malformed feature config token '" + token + "'");
        fields[token.substr(0, eq)] = token.substr(eq + 1);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) throw FormatError("feature config lacks '" + key + "'");
        return it->second;
    };
    FeatureConfig c;
    try {
        c.kind = feature_kind_from_string(need("kind"));
        c.frame_params.window_len = std::stoul(need("window"));
        c.frame_params.hop = std::stoul(need("hop"));
        c.frame_params.fft_size = std::stoul(need("fft"));
        c.n_mels = std::stoul(need("n_mels"));
        c.fmin = std::stod(need("fmin"));
        c.fmax = std::stod(need("fmax"));
        c.preemphasis = std::stod(need("preemphasis"));
        c.n_mfcc = std::stoul(need("n_mfcc"));
        c.sample_rate = std::stoi(need("sample_rate"));
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("bad number in feature config: ") + e.what());
    }
    c.validate();
    return c;
}

FeatureExtractor::FeatureExtractor(FeatureConfig config)
    : config_(std::move(config)),
      filterbank_((config_.validate(),
                   build_filterbank(config_.n_mels, config_.frame_params, config_.sample_rate,
                                    config_.fmin, config_.fmax))) {}

FeatureMatrix FeatureExtractor::operator()(const audio::AudioClip& clip) const {
    if (config_.kind == FeatureKind::kMfcc) {
        return mfcc(clip, config_.frame_params, filterbank_, config_.preemphasis, config_.n_mfcc);
    }
    return mel_spectrogram(clip, config_.frame_params, filterbank_);
}

Standardizer Standardizer::fit(std::span<const FeatureMatrix* const> matrices) {
    if (matrices.empty()) throw EmptyResultError("cannot fit a standardizer on no matrices");
    const std::size_t bands = matrices.front()->bands;
    std::vector<double> sum(bands, 0.0);
    std::vector<double> count(bands, 0.0);
    for (const auto* fm : matrices) {
        if (fm->bands != bands) throw ShapeError("standardizer inputs disagree on band count");
        for (std::size_t b = 0; b < bands; ++b) {
            for (std::size_t t = 0; t < fm->frames; ++t) sum[b] += fm->at(b, t);
            count[b] += static_cast<double>(fm->frames);
        }
    }
    if (count.front() == 0.0) throw EmptyResultError("standardizer inputs have no frames");
    Standardizer s;
    s.mean.resize(bands);
    s.stddev.resize(bands);
    for (std::size_t b = 0; b < bands; ++b) s.mean[b] = sum[b] / count[b];
    std::vector<double> sq(bands, 0.0);
    for (const auto* fm : matrices) {
        for (std::size_t b = 0; b < bands; ++b) {
            for (std::size_t t = 0; t < fm->frames; ++t) {
                const double d = fm->at(b, t) - s.mean[b];
                sq[b] += d * d;
            }
        }
    }
    for (std::size_t b = 0; b < bands; ++b) s.stddev[b] = std::sqrt(sq[b] / count[b]);
    return s;
}

double Standardizer::transform(std::size_t band, double raw) const {
    // Constant bands carry no scale information; centre them without dividing by ~0.
    const double sd = stddev[band] > 1e-8 ? stddev[band] : 1.0;
    return (raw - mean[band]) / sd;
}

void Standardizer::apply(FeatureMatrix& matrix) const {
    if (matrix.bands != mean.size()) {
        throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                         " bands, matrix has " + std::to_string(matrix.bands));
    }
    for (std::size_t b = 0; b < matrix.bands; ++b) {
        for (std::size_t t = 0; t < matrix.frames; ++t) matrix.at(b, t) = transform(b, matrix.at(b, t));
    }
}

}  // namespace birdfcn::dsp
