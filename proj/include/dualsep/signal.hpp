#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dualsep {

inline constexpr double kPipelineSampleRate = 16000.0;

/// Zones M and microphones per zone P. Raw channel order is zone-major,
/// mic-minor: channel = zone * P + mic.
struct ChannelLayout {
  std::size_t zones = 1;
  std::size_t mics_per_zone = 1;

  std::size_t raw_channels() const noexcept { return zones * mics_per_zone; }
  std::size_t raw_index(std::size_t zone, std::size_t mic) const noexcept { return zone * mics_per_zone + mic; }
  void validate() const;
  bool operator==(const ChannelLayout&) const = default;
};

enum class LayoutKind { raw_mics, per_zone, mono };

/// Time-domain samples [channels x length] stored channel-major as float32.
class MultichannelSignal {
 public:
  MultichannelSignal() = default;

  /// Generic container; the layout is per_zone(channels), or mono for one channel.
  MultichannelSignal(std::size_t channels, std::size_t length, double sample_rate = kPipelineSampleRate);

  static MultichannelSignal raw_mics(ChannelLayout layout, std::size_t length, double sample_rate = kPipelineSampleRate);
  static MultichannelSignal per_zone(std::size_t zones, std::size_t length, double sample_rate = kPipelineSampleRate);
  static MultichannelSignal mono(std::size_t length, double sample_rate = kPipelineSampleRate);
  static MultichannelSignal mono(std::span<const float> samples, double sample_rate = kPipelineSampleRate);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t length() const noexcept { return length_; }
  double sample_rate() const noexcept { return sample_rate_; }
  LayoutKind layout_kind() const noexcept { return kind_; }
  const ChannelLayout& layout() const noexcept { return layout_; }

  /// Reinterprets the channel axis as a raw P*M microphone layout.
  MultichannelSignal as_raw_mics(ChannelLayout layout) const;

  std::span<float> channel(std::size_t c);
  std::span<const float> channel(std::size_t c) const;
  float& at(std::size_t c, std::size_t n) { return samples_[c * length_ + n]; }
  float at(std::size_t c, std::size_t n) const { return samples_[c * length_ + n]; }

  std::span<float> samples() noexcept { return samples_; }
  std::span<const float> samples() const noexcept { return samples_; }

  /// Copy of samples [begin, begin+count) of every channel; out-of-range samples read as zero.
  MultichannelSignal slice(std::size_t begin, std::size_t count) const;
  /// Single-channel copy of channel c.
  MultichannelSignal extract(std::size_t c) const;

  bool all_finite() const noexcept;

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  double sample_rate_ = kPipelineSampleRate;
  LayoutKind kind_ = LayoutKind::mono;
  ChannelLayout layout_{};
  std::vector<float> samples_;
};

/// sqrt(mean(x^2)) of one channel. Throws DomainError on an empty signal.
double rms(const MultichannelSignal& signal, std::size_t channel);

/// Sum of squares over every channel, accumulated in double.
double energy(const MultichannelSignal& signal);

}  // namespace dualsep
