#pragma once

#include <cstddef>
#include <vector>

#include "dualsep/signal.hpp"

namespace dualsep {

inline constexpr double kSpeedOfSound = 343.0;

enum class GainNorm { inverse_p, none };

/// Per-zone steering: one delay per microphone, in seconds.
struct SteeringSpec {
  std::vector<double> delays;
  GainNorm gain_norm = GainNorm::inverse_p;

  /// All-zero delays: the target is straight in front of the line array.
  static SteeringSpec broadside(std::size_t mics);
  void validate() const;
  bool operator==(const SteeringSpec&) const = default;
};

struct LineArray {
  std::size_t mics = 4;
  double spacing = 0.02;  // meters
  double speed_of_sound = kSpeedOfSound;
};

/// Plane-wave steering delays p * spacing * sin(azimuth) / c, shifted so the
/// smallest delay is zero. |azimuth| <= pi/2.
SteeringSpec delays_for_direction(const LineArray& array, double azimuth);

/// Fixed delay-and-sum: zone i output = gain * sum_p y_{p,i}(t - tau_p).
///
/// `raw` must carry a raw_mics layout (zone-major). `steering` holds one spec
/// per zone, or a single spec applied to every zone. Zero delays reduce to the
/// per-zone channel mean.
MultichannelSignal delay_and_sum(const MultichannelSignal& raw, const std::vector<SteeringSpec>& steering);

/// Broadside delay-and-sum for every zone.
MultichannelSignal delay_and_sum(const MultichannelSignal& raw);

/// Samples of future input a fractional steering needs (0 when every delay is
/// a whole number of samples).
std::size_t steering_lookahead(const std::vector<SteeringSpec>& steering, double sample_rate);

}  // namespace dualsep
