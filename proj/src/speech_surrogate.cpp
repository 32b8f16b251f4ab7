#include "dualsep/speech_surrogate.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace dualsep {
namespace {

// Two-pole resonator with unit peak gain.
struct Resonator {
  double a1 = 0, a2 = 0, g = 0, y1 = 0, y2 = 0;

  Resonator(double freq, double bandwidth, double fs) {
    const double r = std::exp(-std::numbers::pi * bandwidth / fs);
    a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
    a2 = -r * r;
    g = 1.0 - r;
  }
  double step(double x) {
    const double y = g * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

MultichannelSignal speech_surrogate(std::size_t length, std::mt19937_64& rng, double sample_rate,
                                    const SurrogateParams& params) {
  MultichannelSignal out = MultichannelSignal::mono(length, sample_rate);
  if (length == 0) return out;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto span_of = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<double> x(length, 0.0);
  std::size_t pos = static_cast<std::size_t>(span_of(0.0, params.max_pause) * sample_rate);
  while (pos < length) {
    const auto syllable = static_cast<std::size_t>(span_of(params.min_syllable, params.max_syllable) * sample_rate);
    const double f0 = span_of(params.min_f0, params.max_f0);
    const double glide = span_of(-0.25, 0.25);
    const double level = span_of(0.3, 1.0);
    std::array<Resonator, 3> formants{Resonator(span_of(300, 900), 90, sample_rate),
                                      Resonator(span_of(900, 2400), 120, sample_rate),
                                      Resonator(span_of(2400, 3600), 180, sample_rate)};
    const std::array<double, 3> weights{1.0, 0.6, 0.3};
    double phase = 0.0;
    for (std::size_t n = 0; n < syllable && pos + n < length; ++n) {
      const double progress = static_cast<double>(n) / static_cast<double>(syllable);
      const double pitch = f0 * (1.0 + glide * progress);
      phase += pitch / sample_rate;
      double pulse = 0.0;
      if (phase >= 1.0) {
        phase -= 1.0;
        pulse = 1.0;
      }
      const double excitation = params.voicing * pulse * 8.0 + (1.0 - params.voicing) * gauss(rng);
      double y = 0.0;
      for (std::size_t k = 0; k < formants.size(); ++k) y += weights[k] * formants[k].step(excitation);
      const double envelope = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * progress);
      x[pos + n] = level * envelope * y;
    }
    pos += syllable + static_cast<std::size_t>(span_of(0.0, params.max_pause) * sample_rate);
  }

  // DC blocker: pulse trains under an envelope carry a slow offset.
  double prev_in = 0.0, prev_out = 0.0;
  for (double& v : x) {
    const double y = v - prev_in + 0.995 * prev_out;
    prev_in = v;
    prev_out = y;
    v = y;
  }

  double acc = 0.0;
  for (double v : x) acc += v * v;
  const double scale = acc > 0.0 ? 1.0 / std::sqrt(acc / static_cast<double>(length)) : 0.0;
  for (std::size_t n = 0; n < length; ++n) out.at(0, n) = static_cast<float>(x[n] * scale);
  return out;
}

}  // namespace dualsep
