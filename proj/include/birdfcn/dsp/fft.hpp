#pragma once

#include <complex>
#include <span>
#include <vector>

namespace birdfcn::dsp {

using Complex = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Iterative radix-2 decimation-in-time FFT with precomputed twiddles and bit-reversal.
class FftPlan {
public:
    explicit FftPlan(std::size_t size);

    std::size_t size() const noexcept { return size_; }

    /// X_k = sum_n x_n exp(-j 2 pi n k / N), in place.
    void forward(std::span<Complex> data) const;

    /// Bins 0..N/2 of the transform of a real frame of length N.
    std::vector<Complex> real_forward(std::span<const double> frame) const;

private:
    std::size_t size_;
    std::vector<std::size_t> bit_reverse_;
    std::vector<Complex> twiddles_;
};

/// O(N^2) evaluation of the DFT sum for any N; bins 0..N/2 for real input.
std::vector<Complex> dft_naive(std::span<const double> frame);

/// |X_k|^2 per bin.
std::vector<double> power_spectrum(std::span<const Complex> bins);

}  // namespace birdfcn::dsp
