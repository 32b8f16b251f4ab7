#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dualsep {

/// In-place iterative radix-2 FFT in double precision.
///
/// One fixed algorithm per size so results are reproducible run to run.
class Fft {
 public:
  explicit Fft(std::size_t size);

  std::size_t size() const noexcept { return size_; }

  void forward(std::span<std::complex<double>> data) const;
  /// Unnormalized inverse; divide by size() to invert forward().
  void inverse(std::span<std::complex<double>> data) const;

  /// Onesided spectrum (size/2 + 1 bins) of a real frame of length size().
  void forward_real(std::span<const double> frame, std::span<std::complex<double>> spectrum) const;
  /// Inverse of forward_real, including the 1/size normalization.
  void inverse_real(std::span<const std::complex<double>> spectrum, std::span<double> frame) const;

 private:
  void transform(std::span<std::complex<double>> data, bool inverse) const;

  std::size_t size_;
  std::vector<std::size_t> bit_reverse_;
  std::vector<std::complex<double>> twiddles_;
  mutable std::vector<std::complex<double>> scratch_;
};

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

/// Full linear convolution of two real sequences via zero-padded FFT.
std::vector<double> fft_convolve(std::span<const float> a, std::span<const float> b);

}  // namespace dualsep
