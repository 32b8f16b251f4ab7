#include "dualsep/beamform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dualsep/error.hpp"
#include "dualsep/fractional_delay.hpp"

namespace dualsep {
namespace {

bool is_whole(double samples) { return std::abs(samples - std::round(samples)) < 1e-9; }

const SteeringSpec& steering_for_zone(const std::vector<SteeringSpec>& steering, std::size_t zone) {
  return steering.size() == 1 ? steering.front() : steering[zone];
}

}  // namespace

SteeringSpec SteeringSpec::broadside(std::size_t mics) { return SteeringSpec{std::vector<double>(mics, 0.0), GainNorm::inverse_p}; }

void SteeringSpec::validate() const {
  if (delays.empty()) throw ValidationError("steering needs at least one delay");
  for (double d : delays) {
    if (!std::isfinite(d) || std::abs(d) >= 0.01) throw ValidationError("steering delays must be finite and below 10 ms");
  }
}

SteeringSpec delays_for_direction(const LineArray& array, double azimuth) {
  if (std::abs(azimuth) > std::numbers::pi / 2 + 1e-12) throw ValidationError("azimuth must lie in [-pi/2, pi/2]");
  SteeringSpec spec;
  spec.delays.resize(array.mics);
  for (std::size_t p = 0; p < array.mics; ++p) {
    spec.delays[p] = static_cast<double>(p) * array.spacing * std::sin(azimuth) / array.speed_of_sound;
  }
  const double lo = *std::min_element(spec.delays.begin(), spec.delays.end());
  for (double& d : spec.delays) d -= lo;
  return spec;
}

MultichannelSignal delay_and_sum(const MultichannelSignal& raw, const std::vector<SteeringSpec>& steering) {
  if (raw.layout_kind() != LayoutKind::raw_mics) throw ContractError("delay_and_sum expects a raw microphone layout");
  const ChannelLayout& layout = raw.layout();
  const std::size_t zones = layout.zones;
  const std::size_t mics = layout.mics_per_zone;
  if (steering.size() != 1 && steering.size() != zones) {
    throw ContractError("expected 1 or " + std::to_string(zones) + " steering specs, got " + std::to_string(steering.size()));
  }
  for (const auto& s : steering) {
    s.validate();
    if (s.delays.size() != mics) throw ContractError("steering delay count does not match mics per zone");
  }

  MultichannelSignal out = MultichannelSignal::per_zone(zones, raw.length(), raw.sample_rate());
  std::vector<double> acc(raw.length());
  std::vector<double> shifted(raw.length());
  for (std::size_t z = 0; z < zones; ++z) {
    const SteeringSpec& spec = steering_for_zone(steering, z);
    const double gain = spec.gain_norm == GainNorm::inverse_p ? 1.0 / static_cast<double>(mics) : 1.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < mics; ++p) {
      const auto x = raw.channel(layout.raw_index(z, p));
      const double delay = spec.delays[p] * raw.sample_rate();
      if (delay == 0.0) {
        for (std::size_t n = 0; n < x.size(); ++n) acc[n] += x[n];
      } else {
        delay_signal(x, delay, shifted);
        for (std::size_t n = 0; n < x.size(); ++n) acc[n] += shifted[n];
      }
    }
    auto y = out.channel(z);
    for (std::size_t n = 0; n < y.size(); ++n) y[n] = static_cast<float>(acc[n] * gain);
  }
  return out;
}

MultichannelSignal delay_and_sum(const MultichannelSignal& raw) {
  if (raw.layout_kind() != LayoutKind::raw_mics) throw ContractError("delay_and_sum expects a raw microphone layout");
  return delay_and_sum(raw, {SteeringSpec::broadside(raw.layout().mics_per_zone)});
}

std::size_t steering_lookahead(const std::vector<SteeringSpec>& steering, double sample_rate) {
  for (const auto& s : steering) {
    for (double d : s.delays) {
      if (!is_whole(d * sample_rate)) return kSincTaps / 2;
    }
  }
  return 0;
}

}  // namespace dualsep
