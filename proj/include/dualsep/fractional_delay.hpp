#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dualsep {

inline constexpr std::size_t kSincTaps = 33;

/// Windowed-sinc (Hann) taps that delay by `fraction` in [0, 1) samples.
/// Tap k applies to offset k - kSincTaps/2; the taps sum to one up to the
/// window's truncation error.
std::vector<double> fractional_delay_taps(double fraction, std::size_t taps = kSincTaps);

/// y[n] = x(n - delay) for a non-negative delay in samples. Integer delays are
/// exact shifts; fractional ones use fractional_delay_taps and read zeros
/// outside x.
void delay_signal(std::span<const float> x, double delay_samples, std::span<double> y);

/// Adds amplitude * delta(n - delay) to `h` with windowed-sinc interpolation,
/// dropping taps that fall outside h.
void add_fractional_impulse(std::span<double> h, double delay_samples, double amplitude, std::size_t taps = kSincTaps);

}  // namespace dualsep
