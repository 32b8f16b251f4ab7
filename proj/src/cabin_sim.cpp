#include "dualsep/cabin_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "dualsep/error.hpp"
#include "dualsep/fft.hpp"
#include "dualsep/fractional_delay.hpp"

namespace dualsep {
namespace {

struct AxisImage {
  double coord;
  int order;
};

// Mirror images of coordinate s in [0, L] whose position lies within `reach`
// of the interval [lo, hi].
std::vector<AxisImage> axis_images(double s, double L, double lo, double hi, double reach, int max_order) {
  std::vector<AxisImage> out;
  const int nmax = static_cast<int>(std::ceil(reach / (2.0 * L))) + 1;
  for (int n = -nmax; n <= nmax; ++n) {
    for (int q = 0; q < 2; ++q) {
      const double coord = (q == 0 ? s : -s) + 2.0 * n * L;
      const int order = q == 0 ? 2 * std::abs(n) : std::abs(2 * n - 1);
      if (max_order >= 0 && order > max_order) continue;
      if (coord < lo - reach || coord > hi + reach) continue;
      out.push_back({coord, order});
    }
  }
  return out;
}

// Butterworth biquad, in place.
void highpass(std::span<double> x, double cutoff, double fs) {
  const double k = std::tan(std::numbers::pi * cutoff / fs);
  const double q = std::numbers::sqrt2 / 2.0;
  const double norm = 1.0 / (1.0 + k / q + k * k);
  const double b0 = norm, b1 = -2.0 * norm, b2 = norm;
  const double a1 = 2.0 * (k * k - 1.0) * norm, a2 = (1.0 - k / q + k * k) * norm;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& v : x) {
    const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

void check_point(const CabinScene& scene, const Vec3& p, const std::string& what) {
  if (!scene.inside(p)) {
    throw ValidationError(what + " at (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.z) +
                          ") is not strictly inside the cabin");
  }
}

RirSet image_source(const CabinScene& scene, const std::vector<Vec3>& points, const RirOptions& options) {
  if (!(options.tail_seconds > 0.0)) throw ValidationError("RIR tail must be positive");
  if (!(scene.rt60 > 0.0) && options.max_order != 0) throw ValidationError("rt60 must be positive unless max_order is 0");
  std::vector<Vec3> mics;
  for (const auto& array : scene.arrays) mics.insert(mics.end(), array.begin(), array.end());
  for (const auto& p : points) check_point(scene, p, "source");
  for (const auto& m : mics) check_point(scene, m, "microphone");

  const double fs = scene.sample_rate;
  const double c = scene.speed_of_sound;
  const auto taps = static_cast<std::size_t>(std::ceil(options.tail_seconds * fs));
  const double reach = static_cast<double>(taps) / fs * c;
  const double beta = scene.rt60 > 0.0 ? eyring_reflection(scene) : 0.0;

  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (const auto& m : mics) {
    lo = {std::min(lo.x, m.x), std::min(lo.y, m.y), std::min(lo.z, m.z)};
    hi = {std::max(hi.x, m.x), std::max(hi.y, m.y), std::max(hi.z, m.z)};
  }

  RirSet set(points.size(), mics.size(), taps, fs);
  std::vector<double> acc(mics.size() * taps);
  std::vector<double> gain_by_order;
  const double reach2 = reach * reach;
  for (std::size_t s = 0; s < points.size(); ++s) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto xs = axis_images(points[s].x, scene.width, lo.x, hi.x, reach, options.max_order);
    const auto ys = axis_images(points[s].y, scene.length, lo.y, hi.y, reach, options.max_order);
    const auto zs = axis_images(points[s].z, scene.height, lo.z, hi.z, reach, options.max_order);
    for (const auto& ix : xs) {
      const double dx_min = std::max({0.0, lo.x - ix.coord, ix.coord - hi.x});
      for (const auto& iy : ys) {
        const double dy_min = std::max({0.0, lo.y - iy.coord, iy.coord - hi.y});
        if (dx_min * dx_min + dy_min * dy_min > reach2) continue;
        for (const auto& iz : zs) {
          const int order = ix.order + iy.order + iz.order;
          if (options.max_order >= 0 && order > options.max_order) continue;
          const double dz_min = std::max({0.0, lo.z - iz.coord, iz.coord - hi.z});
          if (dx_min * dx_min + dy_min * dy_min + dz_min * dz_min > reach2) continue;
          while (gain_by_order.size() <= static_cast<std::size_t>(order)) {
            gain_by_order.push_back(std::pow(beta, static_cast<double>(gain_by_order.size())));
          }
          const double gain = gain_by_order[static_cast<std::size_t>(order)] / (4.0 * std::numbers::pi);
          if (gain == 0.0) continue;
          for (std::size_t m = 0; m < mics.size(); ++m) {
            const double dx = ix.coord - mics[m].x, dy = iy.coord - mics[m].y, dz = iz.coord - mics[m].z;
            const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
            const double delay = d / c * fs;
            if (delay >= static_cast<double>(taps)) continue;
            std::span<double> h(acc.data() + m * taps, taps);
            if (order <= options.sinc_order) {
              add_fractional_impulse(h, delay, gain / d, kSincTaps);
            } else {
              const auto n0 = static_cast<std::size_t>(delay);
              const double frac = delay - static_cast<double>(n0);
              h[n0] += (1.0 - frac) * gain / d;
              if (n0 + 1 < taps) h[n0 + 1] += frac * gain / d;
            }
          }
        }
      }
    }
    for (std::size_t m = 0; m < mics.size(); ++m) {
      if (options.highpass_hz > 0.0) highpass(std::span(acc.data() + m * taps, taps), options.highpass_hz, fs);
      auto out = set.rir(s, m);
      for (std::size_t n = 0; n < taps; ++n) out[n] = static_cast<float>(acc[m * taps + n]);
    }
  }
  return set;
}

std::vector<std::vector<double>> convolve_sources(const std::vector<std::span<const float>>& x, const RirSet& rirs,
                                                  std::size_t first_source, std::size_t length) {
  const std::size_t K = x.size();
  const std::size_t M = rirs.mics();
  const std::size_t Lh = rirs.taps();
  std::vector<std::vector<double>> out(M, std::vector<double>(length, 0.0));
  if (Lh == 0 || length == 0) return out;

  if (Lh <= 64) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t nx = std::min(x[k].size(), length);
      for (std::size_t m = 0; m < M; ++m) {
        const auto h = rirs.rir(first_source + k, m);
        auto& y = out[m];
        for (std::size_t j = 0; j < Lh; ++j) {
          const double hj = h[j];
          if (hj == 0.0) continue;
          for (std::size_t n = 0; n < nx && n + j < length; ++n) y[n + j] += hj * x[k][n];
        }
      }
    }
    return out;
  }

  const std::size_t B = next_power_of_two(std::max<std::size_t>(Lh, 256));
  const std::size_t N = 2 * B;
  const std::size_t bins = B + 1;
  Fft fft(N);
  std::vector<double> frame(N);
  std::vector<std::complex<double>> H(K * M * bins);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t m = 0; m < M; ++m) {
      std::fill(frame.begin(), frame.end(), 0.0);
      const auto h = rirs.rir(first_source + k, m);
      std::copy(h.begin(), h.end(), frame.begin());
      fft.forward_real(frame, std::span(H.data() + (k * M + m) * bins, bins));
    }
  }

  std::size_t nx = 0;
  for (const auto& xk : x) nx = std::max(nx, std::min(xk.size(), length));
  const std::size_t blocks = (nx + B - 1) / B;
  std::vector<std::complex<double>> X(K * bins), acc(bins);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      std::fill(frame.begin(), frame.end(), 0.0);
      const std::size_t limit = std::min(x[k].size(), length);
      for (std::size_t n = 0; n < B && b * B + n < limit; ++n) frame[n] = x[k][b * B + n];
      fft.forward_real(frame, std::span(X.data() + k * bins, bins));
    }
    for (std::size_t m = 0; m < M; ++m) {
      std::fill(acc.begin(), acc.end(), std::complex<double>{});
      for (std::size_t k = 0; k < K; ++k) {
        const auto* Hk = H.data() + (k * M + m) * bins;
        const auto* Xk = X.data() + k * bins;
        for (std::size_t f = 0; f < bins; ++f) acc[f] += Xk[f] * Hk[f];
      }
      fft.inverse_real(acc, frame);
      auto& y = out[m];
      for (std::size_t n = 0; n < N && b * B + n < length; ++n) y[b * B + n] += frame[n];
    }
  }
  return out;
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) noexcept {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool ZoneBox::contains(const Vec3& p) const noexcept {
  constexpr double slack = 1e-9;
  return std::abs(p.x - center.x) <= half_extent.x + slack && std::abs(p.y - center.y) <= half_extent.y + slack &&
         std::abs(p.z - center.z) <= half_extent.z + slack;
}

ChannelLayout CabinScene::layout() const {
  return ChannelLayout{zones.size(), arrays.empty() ? 0 : arrays.front().size()};
}

bool CabinScene::inside(const Vec3& p) const noexcept {
  return p.x > 0.0 && p.x < width && p.y > 0.0 && p.y < length && p.z > 0.0 && p.z < height;
}

void CabinScene::validate() const {
  for (double d : {width, length, height}) {
    if (!(d > 0.0) || !std::isfinite(d)) throw ValidationError("cabin dimensions must be positive and finite");
  }
  if (!(rt60 >= 0.0) || !std::isfinite(rt60)) throw ValidationError("rt60 must be finite and non-negative");
  if (!(speed_of_sound > 0.0) || !(sample_rate > 0.0)) throw ValidationError("speed of sound and sample rate must be positive");
  if (zones.empty() || zones.size() != arrays.size()) throw ValidationError("every zone needs exactly one array");
  for (const auto& array : arrays) {
    if (array.empty() || array.size() != arrays.front().size()) throw ValidationError("arrays must share one microphone count");
    for (const auto& m : array) check_point(*this, m, "microphone");
  }
  if (sources.size() != occupied.size()) throw ValidationError("source positions and occupied zones differ in count");
  if (sources.size() > zones.size()) throw ValidationError("more sources than zones");
  std::vector<bool> seen(zones.size(), false);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::size_t z = occupied[i];
    if (z >= zones.size()) throw ValidationError("occupied zone index " + std::to_string(z) + " out of range");
    if (seen[z]) throw ValidationError("zone " + std::to_string(z) + " holds more than one source");
    seen[z] = true;
    check_point(*this, sources[i], "source");
    if (!zones[z].contains(sources[i])) throw ValidationError("source " + std::to_string(i) + " lies outside its zone");
  }
}

CabinScene build_cabin(double width, double length, double height, double rt60, const CabinLayoutParams& params) {
  CabinScene scene;
  scene.width = width;
  scene.length = length;
  scene.height = height;
  scene.rt60 = rt60;
  const double z = params.source_height_fraction * height;
  for (double row : params.row_fractions) {
    for (double col : params.column_fractions) {
      const Vec3 center{col * width, row * length, z};
      scene.zones.push_back({center, params.zone_half_extent});
      std::vector<Vec3> array;
      const double first = -0.5 * params.mic_spacing * static_cast<double>(params.mics_per_array - 1);
      for (std::size_t p = 0; p < params.mics_per_array; ++p) {
        array.push_back({center.x + first + params.mic_spacing * static_cast<double>(p), center.y - params.array_offset, z});
      }
      scene.arrays.push_back(std::move(array));
    }
  }
  scene.validate();
  return scene;
}

void place_sources(CabinScene& scene, const std::vector<std::size_t>& zones, std::mt19937_64* rng) {
  scene.sources.clear();
  scene.occupied = zones;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t z : zones) {
    if (z >= scene.zones.size()) throw ValidationError("zone index " + std::to_string(z) + " out of range");
    const ZoneBox& box = scene.zones[z];
    Vec3 p = box.center;
    if (rng != nullptr) {
      p.x += unit(*rng) * box.half_extent.x;
      p.y += unit(*rng) * box.half_extent.y;
      p.z += unit(*rng) * box.half_extent.z;
    }
    scene.sources.push_back(p);
  }
  scene.validate();
}

double eyring_reflection(const CabinScene& scene) {
  if (!(scene.rt60 > 0.0)) throw ValidationError("Eyring reflection needs a positive rt60");
  return std::exp(-12.0 * std::log(10.0) * scene.volume() / (scene.speed_of_sound * scene.surface() * scene.rt60));
}

RirSet::RirSet(std::size_t sources, std::size_t mics, std::size_t taps, double sample_rate)
    : sources_(sources), mics_(mics), taps_(taps), sample_rate_(sample_rate), data_(sources * mics * taps, 0.0f) {}

bool RirSet::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

RirSet generate_rirs(const CabinScene& scene, const RirOptions& options) {
  scene.validate();
  return image_source(scene, scene.sources, options);
}

RirSet generate_point_rirs(const CabinScene& scene, const std::vector<Vec3>& points, const RirOptions& options) {
  return image_source(scene, points, options);
}

std::vector<std::vector<double>> convolve_sum(const std::vector<std::span<const float>>& excitations, const RirSet& rirs,
                                              std::size_t length) {
  if (excitations.size() != rirs.sources()) throw ContractError("one excitation per RIR source is required");
  return convolve_sources(excitations, rirs, 0, length);
}

RenderedMixture render_mixture(const CabinScene& scene, const RirSet& rirs, const std::vector<MultichannelSignal>& speech) {
  if (speech.size() != scene.sources.size() || rirs.sources() != scene.sources.size()) {
    throw ContractError("render_mixture needs one speech signal and one RIR set per occupied zone (" +
                        std::to_string(scene.sources.size()) + "), got " + std::to_string(speech.size()));
  }
  const ChannelLayout layout = scene.layout();
  if (rirs.mics() != layout.raw_channels()) throw ContractError("RIR microphone count does not match the cabin arrays");
  std::size_t longest = 0;
  for (const auto& s : speech) {
    if (s.channels() != 1) throw ContractError("speech sources must be mono");
    if (s.sample_rate() != rirs.sample_rate()) throw ContractError("speech and RIR sample rates differ");
    longest = std::max(longest, s.length());
  }
  const std::size_t length = longest == 0 ? 0 : longest + rirs.taps() - 1;

  RenderedMixture out;
  out.mix = MultichannelSignal::raw_mics(layout, length, rirs.sample_rate());
  std::vector<double> mix(layout.raw_channels() * length, 0.0);
  for (std::size_t i = 0; i < speech.size(); ++i) {
    const auto image = convolve_sources({speech[i].channel(0)}, rirs, i, length);
    for (std::size_t m = 0; m < image.size(); ++m) {
      for (std::size_t n = 0; n < length; ++n) mix[m * length + n] += image[m][n];
    }
    MultichannelSignal ref(layout.mics_per_zone, length, rirs.sample_rate());
    for (std::size_t p = 0; p < layout.mics_per_zone; ++p) {
      const auto& src = image[layout.raw_index(scene.occupied[i], p)];
      for (std::size_t n = 0; n < length; ++n) ref.at(p, n) = static_cast<float>(src[n]);
    }
    out.refs.push_back(std::move(ref));
  }
  for (std::size_t m = 0; m < layout.raw_channels(); ++m) {
    for (std::size_t n = 0; n < length; ++n) out.mix.at(m, n) = static_cast<float>(mix[m * length + n]);
  }
  return out;
}

MultichannelSignal add_noise_at_sdr(const MultichannelSignal& mix, const MultichannelSignal& noise, double sdr_db) {
  if (noise.channels() != mix.channels()) throw ContractError("noise and mixture channel counts differ");
  if (!std::isfinite(sdr_db)) throw ValidationError("SDR must be finite");
  const double signal_energy = energy(mix);
  if (signal_energy == 0.0) throw DomainError("SDR is undefined for a silent mixture");
  if (noise.length() == 0) throw DomainError("noise is empty");
  double noise_energy = 0.0;
  for (std::size_t c = 0; c < mix.channels(); ++c) {
    for (std::size_t n = 0; n < mix.length(); ++n) {
      const double v = noise.at(c, n % noise.length());
      noise_energy += v * v;
    }
  }
  if (noise_energy == 0.0) throw DomainError("noise is silent over the mixture span");
  const double alpha = std::sqrt(signal_energy / (noise_energy * std::pow(10.0, sdr_db / 10.0)));
  MultichannelSignal out = mix;
  for (std::size_t c = 0; c < mix.channels(); ++c) {
    for (std::size_t n = 0; n < mix.length(); ++n) {
      out.at(c, n) = static_cast<float>(static_cast<double>(mix.at(c, n)) + alpha * noise.at(c, n % noise.length()));
    }
  }
  return out;
}

MultichannelSignal diffuse_noise(const CabinScene& scene, std::size_t length, std::mt19937_64& rng,
                                 const DiffuseNoiseParams& params) {
  if (params.positions < 1) throw ValidationError("diffuse noise needs at least one position");
  constexpr double margin = 0.05;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Vec3> points;
  for (std::size_t k = 0; k < params.positions; ++k) {
    Vec3 p{margin + unit(rng) * (scene.width - 2 * margin), margin + unit(rng) * (scene.length - 2 * margin),
           margin + unit(rng) * (scene.height - 2 * margin)};
    // Push the point against a random wall so the field arrives from the boundary.
    const double depth = margin + unit(rng) * 0.1;
    switch (k % 6) {
      case 0: p.x = depth; break;
      case 1: p.x = scene.width - depth; break;
      case 2: p.y = depth; break;
      case 3: p.y = scene.length - depth; break;
      case 4: p.z = depth; break;
      default: p.z = scene.height - depth; break;
    }
    points.push_back(p);
  }

  std::vector<std::vector<float>> excitation(params.positions, std::vector<float>(length));
  for (auto& e : excitation) {
    double state = 0.0;
    for (auto& v : e) {
      state = params.color * state + gauss(rng);
      v = static_cast<float>(state);
    }
  }

  RirOptions options;
  options.tail_seconds = params.rir_seconds;
  const RirSet rirs = image_source(scene, points, options);
  std::vector<std::span<const float>> spans(excitation.begin(), excitation.end());
  const auto rendered = convolve_sources(spans, rirs, 0, length);

  MultichannelSignal out = MultichannelSignal::raw_mics(scene.layout(), length, scene.sample_rate);
  for (std::size_t m = 0; m < rendered.size(); ++m) {
    for (std::size_t n = 0; n < length; ++n) out.at(m, n) = static_cast<float>(rendered[m][n]);
  }
  return out;
}

}  // namespace dualsep
