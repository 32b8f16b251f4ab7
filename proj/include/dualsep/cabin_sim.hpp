#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dualsep/beamform.hpp"
#include "dualsep/signal.hpp"

namespace dualsep {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Vec3&) const = default;
};

double distance(const Vec3& a, const Vec3& b) noexcept;

struct ZoneBox {
  Vec3 center;
  Vec3 half_extent;
  bool contains(const Vec3& p) const noexcept;
};

/// Where zones and arrays sit, as fractions of the cabin dimensions.
/// Zones form rows along the cabin length (y) and columns across its width (x);
/// each zone's line array runs along x, `array_offset` meters in front of the
/// zone center at the same height, so the seat is broadside to its array.
struct CabinLayoutParams {
  std::vector<double> row_fractions{0.28, 0.55, 0.82};
  std::vector<double> column_fractions{0.3, 0.7};
  double source_height_fraction = 0.72;
  Vec3 zone_half_extent{0.12, 0.12, 0.06};
  double array_offset = 0.35;
  std::size_t mics_per_array = 4;
  double mic_spacing = 0.02;
};

struct CabinScene {
  double width = 1.6;   // x
  double length = 2.4;  // y
  double height = 1.3;  // z
  double rt60 = 0.5;
  std::vector<ZoneBox> zones;
  /// arrays[zone][mic]
  std::vector<std::vector<Vec3>> arrays;
  /// One position per occupied zone, in the order of `occupied`.
  std::vector<Vec3> sources;
  std::vector<std::size_t> occupied;
  double speed_of_sound = kSpeedOfSound;
  double sample_rate = kPipelineSampleRate;
  std::uint64_t seed = 0;

  std::size_t zone_count() const noexcept { return zones.size(); }
  ChannelLayout layout() const;
  bool inside(const Vec3& p) const noexcept;
  double volume() const noexcept { return width * length * height; }
  double surface() const noexcept { return 2.0 * (width * length + width * height + length * height); }
  void validate() const;
};

/// Cabin with zones and arrays laid out per `params` and no sources yet.
CabinScene build_cabin(double width, double length, double height, double rt60, const CabinLayoutParams& params = {});

/// Puts one source in each listed zone: uniformly inside the zone box when
/// `rng` is given, at the zone center otherwise.
void place_sources(CabinScene& scene, const std::vector<std::size_t>& zones, std::mt19937_64* rng = nullptr);

/// Wall amplitude reflection coefficient giving `rt60` under Eyring's formula.
double eyring_reflection(const CabinScene& scene);

/// Impulse responses [source][mic][tap], mics in raw zone-major order.
class RirSet {
 public:
  RirSet() = default;
  RirSet(std::size_t sources, std::size_t mics, std::size_t taps, double sample_rate = kPipelineSampleRate);

  std::size_t sources() const noexcept { return sources_; }
  std::size_t mics() const noexcept { return mics_; }
  std::size_t taps() const noexcept { return taps_; }
  double sample_rate() const noexcept { return sample_rate_; }

  std::span<float> rir(std::size_t source, std::size_t mic) { return {data_.data() + (source * mics_ + mic) * taps_, taps_}; }
  std::span<const float> rir(std::size_t source, std::size_t mic) const {
    return {data_.data() + (source * mics_ + mic) * taps_, taps_};
  }
  bool all_finite() const noexcept;

 private:
  std::size_t sources_ = 0;
  std::size_t mics_ = 0;
  std::size_t taps_ = 0;
  double sample_rate_ = kPipelineSampleRate;
  std::vector<float> data_;
};

struct RirOptions {
  /// Highest reflection order kept; negative keeps every image that arrives
  /// within the tail.
  int max_order = -1;
  double tail_seconds = 0.25;
  /// Images up to this order are placed with windowed sinc, later ones with
  /// linear interpolation.
  int sinc_order = 3;
  /// Cutoff of the second-order causal high-pass applied to each response.
  /// The image sum builds up a large spurious DC term in small rooms. 0 disables.
  double highpass_hz = 80.0;
};

/// Image-source RIRs from every scene source to every microphone.
/// Each image contributes beta^order / (4 pi d) at delay d / c.
RirSet generate_rirs(const CabinScene& scene, const RirOptions& options = {});

/// Same construction for arbitrary points inside the cabin (used for noise).
RirSet generate_point_rirs(const CabinScene& scene, const std::vector<Vec3>& points, const RirOptions& options);

struct RenderedMixture {
  MultichannelSignal mix;                  // raw_mics
  std::vector<MultichannelSignal> refs;    // per source, P channels at its own zone's array
};

/// mix = sum_i r_i * s_i over full-length convolutions; refs[i] is x_i at the
/// array of the zone source i occupies.
RenderedMixture render_mixture(const CabinScene& scene, const RirSet& rirs, const std::vector<MultichannelSignal>& speech);

/// out[m] = sum_k x_k * h_{k,m}, truncated to `length` samples. Uses direct
/// convolution for short responses and partitioned FFT convolution otherwise.
std::vector<std::vector<double>> convolve_sum(const std::vector<std::span<const float>>& excitations, const RirSet& rirs,
                                              std::size_t length);

/// mix + alpha * noise with alpha chosen so 10 log10(|mix|^2 / |alpha noise|^2)
/// equals sdr_db over all channels. Short noise is repeated cyclically.
MultichannelSignal add_noise_at_sdr(const MultichannelSignal& mix, const MultichannelSignal& noise, double sdr_db);

struct DiffuseNoiseParams {
  std::size_t positions = 16;
  double rir_seconds = 0.1;
  /// One-pole low-pass coefficient shaping each excitation toward road noise.
  double color = 0.9;
};

/// Sum of independent excitations played from random points near the cabin
/// boundary, rendered to every microphone.
MultichannelSignal diffuse_noise(const CabinScene& scene, std::size_t length, std::mt19937_64& rng,
                                 const DiffuseNoiseParams& params = {});

}  // namespace dualsep
