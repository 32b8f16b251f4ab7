#include "dualsep/fractional_delay.hpp"

#include <cmath>
#include <numbers>

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<double> fractional_delay_taps(double fraction, std::size_t taps) {
  if (taps % 2 == 0) throw ValidationError("fractional delay filter needs an odd tap count");
  const auto half = static_cast<double>(taps / 2);
  std::vector<double> h(taps);
  for (std::size_t k = 0; k < taps; ++k) {
    const double offset = static_cast<double>(k) - half - fraction;
    // Hann window spanning the taps, centered on the fractional position.
    const double window = 0.5 * (1.0 + std::cos(std::numbers::pi * offset / (half + 1.0)));
    h[k] = window * sinc(offset);
  }
  return h;
}

void delay_signal(std::span<const float> x, double delay_samples, std::span<double> y) {
  if (y.size() != x.size()) throw ContractError("delay_signal output must match input length");
  if (!std::isfinite(delay_samples)) throw ValidationError("non-finite delay");
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  const double nearest = std::round(delay_samples);
  if (std::abs(delay_samples - nearest) < 1e-9) {
    const auto shift = static_cast<std::ptrdiff_t>(nearest);
    for (std::ptrdiff_t n = 0; n < len; ++n) {
      const std::ptrdiff_t src = n - shift;
      y[static_cast<std::size_t>(n)] = (src >= 0 && src < len) ? x[static_cast<std::size_t>(src)] : 0.0;
    }
    return;
  }
  const double whole = std::floor(delay_samples);
  const double fraction = delay_samples - whole;
  const auto shift = static_cast<std::ptrdiff_t>(whole);
  const auto taps = fractional_delay_taps(fraction);
  const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  for (std::ptrdiff_t n = 0; n < len; ++n) {
    double acc = 0.0;
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(taps.size()); ++k) {
      // Tap k sits at output offset k - half relative to n - shift.
      const std::ptrdiff_t src = n - shift - (k - half);
      if (src >= 0 && src < len) acc += taps[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(src)];
    }
    y[static_cast<std::size_t>(n)] = acc;
  }
}

void add_fractional_impulse(std::span<double> h, double delay_samples, double amplitude, std::size_t taps) {
  const double whole = std::floor(delay_samples);
  const double fraction = delay_samples - whole;
  const auto center = static_cast<std::ptrdiff_t>(whole);
  const auto len = static_cast<std::ptrdiff_t>(h.size());
  if (taps <= 1) {
    if (center >= 0 && center < len) h[static_cast<std::size_t>(center)] += amplitude;
    return;
  }
  if (taps == 2) {
    // Linear interpolation.
    if (center >= 0 && center < len) h[static_cast<std::size_t>(center)] += amplitude * (1.0 - fraction);
    if (center + 1 >= 0 && center + 1 < len) h[static_cast<std::size_t>(center + 1)] += amplitude * fraction;
    return;
  }
  const auto coeffs = fractional_delay_taps(fraction, taps);
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(taps); ++k) {
    const std::ptrdiff_t n = center + k - half;
    if (n >= 0 && n < len) h[static_cast<std::size_t>(n)] += amplitude * coeffs[static_cast<std::size_t>(k)];
  }
}

}  // namespace dualsep
