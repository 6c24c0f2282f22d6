#include "birdfcn/dsp/fft.hpp"

#include <cmath>
#include <numbers>

#include "birdfcn/error.hpp"

namespace birdfcn::dsp {

FftPlan::FftPlan(std::size_t size) : size_(size) {
    if (!is_power_of_two(size)) {
        throw ParameterError("FFT size must be a power of two, got " + std::to_string(size));
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < size) ++bits;
    bit_reverse_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) {
            if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        }
        bit_reverse_[i] = r;
    }
    twiddles_.resize(size / 2);
    for (std::size_t k = 0; k < size / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) /
                             static_cast<double>(size);
        twiddles_[k] = Complex(std::cos(angle), std::sin(angle));
    }
}

void FftPlan::forward(std::span<Complex> data) const {
    if (data.size() != size_) {
        throw ShapeError("FFT plan of size " + std::to_string(size_) + " applied to " +
                         std::to_string(data.size()) + " points");
    }
    for (std::size_t i = 0; i < size_; ++i) {
        const std::size_t j = bit_reverse_[i];
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= size_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = size_ / len;
        for (std::size_t start = 0; start < size_; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex t = twiddles_[k * step] * data[start + k + half];
                const Complex u = data[start + k];
                data[start + k] = u + t;
                data[start + k + half] = u - t;
            }
        }
    }
}

std::vector<Complex> FftPlan::real_forward(std::span<const double> frame) const {
    if (frame.size() != size_) {
        throw ShapeError("real FFT expects " + std::to_string(size_) + " samples, got " +
                         std::to_string(frame.size()));
    }
    std::vector<Complex> buffer(frame.begin(), frame.end());
    forward(buffer);
    buffer.resize(size_ / 2 + 1);
    return buffer;
}

std::vector<Complex> dft_naive(std::span<const double> frame) {
    const std::size_t n = frame.size();
    std::vector<Complex> out(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        Complex acc{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            // Reduce n*k mod N first so the angle stays small and accurate.
            const double angle = -2.0 * std::numbers::pi * static_cast<double>((t * k) % n) /
                                 static_cast<double>(n);
            acc += frame[t] * Complex(std::cos(angle), std::sin(angle));
        }
        out[k] = acc;
    }
    return out;
}

std::vector<double> power_spectrum(std::span<const Complex> bins) {
    std::vector<double> out(bins.size());
    for (std::size_t k = 0; k < bins.size(); ++k) out[k] = std::norm(bins[k]);
    return out;
}

}  // namespace birdfcn::dsp
