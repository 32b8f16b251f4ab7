#include "dualsep/signal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualsep/error.hpp"

namespace dualsep {

void ChannelLayout::validate() const {
  if (zones < 1 || mics_per_zone < 1) throw ValidationError("channel layout needs at least one zone and one mic per zone");
}

MultichannelSignal::MultichannelSignal(std::size_t channels, std::size_t length, double sample_rate)
    : channels_(channels), length_(length), sample_rate_(sample_rate), samples_(channels * length, 0.0f) {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw ValidationError("sample rate must be positive");
  kind_ = channels == 1 ? LayoutKind::mono : LayoutKind::per_zone;
  layout_ = ChannelLayout{channels, 1};
}

MultichannelSignal MultichannelSignal::raw_mics(ChannelLayout layout, std::size_t length, double sample_rate) {
  layout.validate();
  MultichannelSignal s(layout.raw_channels(), length, sample_rate);
  s.kind_ = LayoutKind::raw_mics;
  s.layout_ = layout;
  return s;
}

MultichannelSignal MultichannelSignal::per_zone(std::size_t zones, std::size_t length, double sample_rate) {
  if (zones < 1) throw ValidationError("per-zone signal needs at least one zone");
  MultichannelSignal s(zones, length, sample_rate);
  s.kind_ = LayoutKind::per_zone;
  return s;
}

MultichannelSignal MultichannelSignal::mono(std::size_t length, double sample_rate) {
  return MultichannelSignal(1, length, sample_rate);
}

MultichannelSignal MultichannelSignal::mono(std::span<const float> samples, double sample_rate) {
  MultichannelSignal s(1, samples.size(), sample_rate);
  std::copy(samples.begin(), samples.end(), s.samples_.begin());
  return s;
}

MultichannelSignal MultichannelSignal::as_raw_mics(ChannelLayout layout) const {
  layout.validate();
  if (layout.raw_channels() != channels_) {
    throw ContractError("raw microphone layout expects " + std::to_string(layout.raw_channels()) + " channels, signal has " +
                        std::to_string(channels_));
  }
  MultichannelSignal s = *this;
  s.kind_ = LayoutKind::raw_mics;
  s.layout_ = layout;
  return s;
}

std::span<float> MultichannelSignal::channel(std::size_t c) {
  if (c >= channels_) throw ContractError("channel index out of range");
  return {samples_.data() + c * length_, length_};
}

std::span<const float> MultichannelSignal::channel(std::size_t c) const {
  if (c >= channels_) throw ContractError("channel index out of range");
  return {samples_.data() + c * length_, length_};
}

MultichannelSignal MultichannelSignal::slice(std::size_t begin, std::size_t count) const {
  MultichannelSignal out;
  out.channels_ = channels_;
  out.length_ = count;
  out.sample_rate_ = sample_rate_;
  out.kind_ = kind_;
  out.layout_ = layout_;
  out.samples_.assign(channels_ * count, 0.0f);
  const std::size_t avail = begin < length_ ? std::min(count, length_ - begin) : 0;
  for (std::size_t c = 0; c < channels_; ++c) {
    std::copy_n(samples_.begin() + static_cast<std::ptrdiff_t>(c * length_ + begin), avail,
                out.samples_.begin() + static_cast<std::ptrdiff_t>(c * count));
  }
  return out;
}

MultichannelSignal MultichannelSignal::extract(std::size_t c) const {
  return mono(channel(c), sample_rate_);
}

bool MultichannelSignal::all_finite() const noexcept {
  for (float v : samples_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double rms(const MultichannelSignal& signal, std::size_t channel) {
  if (signal.length() == 0) throw DomainError("rms of an empty signal is undefined");
  double acc = 0.0;
  for (float v : signal.channel(channel)) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(signal.length()));
}

double energy(const MultichannelSignal& signal) {
  double acc = 0.0;
  for (float v : signal.samples()) acc += static_cast<double>(v) * v;
  return acc;
}

}  // namespace dualsep
