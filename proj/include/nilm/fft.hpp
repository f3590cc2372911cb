#pragma once

#include <bit>
#include <complex>
#include <span>
#include <vector>

#include "nilm/common.hpp"

namespace nilm {

/// Iterative radix-2 decimation-in-time FFT of a fixed power-of-two size.
/// Twiddle and bit-reversal tables are built once in the constructor and
/// only read afterwards, so one instance may be shared between threads.
class RadixTwoFft {
 public:
  explicit RadixTwoFft(std::size_t n) : n_(n), twiddles_(n / 2), bitrev_(n) {
    require(n >= 2 && std::has_single_bit(n), ErrorKind::Validation, "FFT size must be a power of two >= 2");
    const unsigned bits = static_cast<unsigned>(std::countr_zero(n));
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t r = 0;
      for (unsigned b = 0; b < bits; ++b) r |= ((k >> b) & 1U) << (bits - 1 - b);
      bitrev_[k] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  std::size_t size() const { return n_; }

  /// Forward transform in place: X[k] = sum_n x[n] e^{-2 pi i k n / N}.
  void transform(std::span<std::complex<double>> data) const {
    require(data.size() == n_, ErrorKind::Dimension, "FFT input length does not match transform size");
    for (std::size_t k = 0; k < n_; ++k) {
      if (k < bitrev_[k]) std::swap(data[k], data[bitrev_[k]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const auto t = twiddles_[j * stride] * data[start + j + half];
          const auto u = data[start + j];
          data[start + j] = u + t;
          data[start + j + half] = u - t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddles_;
  std::vector<std::size_t> bitrev_;
};

inline const RadixTwoFft& fft_plan_1024() {
  static const RadixTwoFft plan(1024);
  return plan;
}

}  // namespace nilm
