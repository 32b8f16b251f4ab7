#include "dualsep/fft.hpp"

#include <cmath>
#include <numbers>

#include "dualsep/error.hpp"

namespace dualsep {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

Fft::Fft(std::size_t size) : size_(size), bit_reverse_(size), twiddles_(size / 2), scratch_(size) {
  if (!is_power_of_two(size)) throw ValidationError("FFT size must be a power of two");
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < size) ++bits;
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bit_reverse_[i] = r;
  }
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void Fft::transform(std::span<std::complex<double>> data, bool inverse) const {
  if (data.size() != size_) throw ContractError("FFT input has the wrong length");
  for (std::size_t i = 0; i < size_; ++i) {
    const std::size_t j = bit_reverse_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= size_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = size_ / len;
    for (std::size_t start = 0; start < size_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<double> w = twiddles_[k * stride];
        if (inverse) w = std::conj(w);
        const std::complex<double> a = data[start + k];
        const std::complex<double> b = data[start + k + half] * w;
        data[start + k] = a + b;
        data[start + k + half] = a - b;
      }
    }
  }
}

void Fft::forward(std::span<std::complex<double>> data) const { transform(data, false); }
void Fft::inverse(std::span<std::complex<double>> data) const { transform(data, true); }

void Fft::forward_real(std::span<const double> frame, std::span<std::complex<double>> spectrum) const {
  if (frame.size() != size_ || spectrum.size() != size_ / 2 + 1) throw ContractError("real FFT buffers have wrong sizes");
  for (std::size_t i = 0; i < size_; ++i) scratch_[i] = {frame[i], 0.0};
  transform(scratch_, false);
  for (std::size_t k = 0; k <= size_ / 2; ++k) spectrum[k] = scratch_[k];
}

void Fft::inverse_real(std::span<const std::complex<double>> spectrum, std::span<double> frame) const {
  if (frame.size() != size_ || spectrum.size() != size_ / 2 + 1) throw ContractError("real FFT buffers have wrong sizes");
  const std::size_t half = size_ / 2;
  scratch_[0] = {spectrum[0].real(), 0.0};
  if (size_ > 1) scratch_[half] = {spectrum[half].real(), 0.0};
  for (std::size_t k = 1; k < half; ++k) {
    scratch_[k] = spectrum[k];
    scratch_[size_ - k] = std::conj(spectrum[k]);
  }
  transform(scratch_, true);
  const double scale = 1.0 / static_cast<double>(size_);
  for (std::size_t i = 0; i < size_; ++i) frame[i] = scratch_[i].real() * scale;
}

std::vector<double> fft_convolve(std::span<const float> a, std::span<const float> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_power_of_two(out_len);
  Fft fft(n);
  std::vector<std::complex<double>> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft.forward(fa);
  fft.forward(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  fft.inverse(fa);
  std::vector<double> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real() * scale;
  return out;
}

}  // namespace dualsep
