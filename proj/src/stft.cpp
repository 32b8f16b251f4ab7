#include "dualsep/stft.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

void windowed_spectrum(const Fft& fft, std::span<const double> window, std::span<double> frame,
                       std::span<std::complex<double>> spectrum) {
  for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= window[i];
  fft.forward_real(frame, spectrum);
}

}  // namespace

std::size_t StftConfig::frames_for(std::size_t length) const noexcept {
  if (length == 0) return 0;
  return (length - 1 + left_pad()) / hop + 1;
}

void StftConfig::validate() const {
  if (!is_power_of_two(fft_size)) throw ValidationError("STFT fft_size must be a power of two");
  if (hop == 0 || hop > win_length || win_length > fft_size) throw ValidationError("STFT needs 0 < hop <= win_length <= fft_size");
  for (double d : ola_denominator(*this)) {
    if (!(d > 1e-6)) throw ValidationError("STFT window/hop pair leaves samples without overlap-add support");
  }
}

std::vector<double> analysis_window(const StftConfig& config) {
  std::vector<double> w(config.fft_size, 0.0);
  for (std::size_t i = 0; i < config.win_length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(config.win_length));
  }
  return w;
}

std::vector<double> ola_denominator(const StftConfig& config) {
  const auto w = analysis_window(config);
  std::vector<double> denom(config.hop, 0.0);
  for (std::size_t j = 0; j < config.hop; ++j) {
    for (std::size_t i = j; i < config.win_length; i += config.hop) denom[j] += w[i] * w[i];
  }
  return denom;
}

ComplexSpectrogram::ComplexSpectrogram(std::size_t frames, std::size_t channels, const StftConfig& config,
                                       std::size_t signal_length, double sample_rate)
    : frames_(frames),
      bins_(config.bins()),
      channels_(channels),
      config_(config),
      signal_length_(signal_length),
      sample_rate_(sample_rate),
      data_(frames * config.bins() * channels) {}

ComplexSpectrogram ComplexSpectrogram::frames_range(std::size_t begin, std::size_t count) const {
  if (begin + count > frames_) throw ContractError("frame range out of bounds");
  ComplexSpectrogram out(count, channels_, config_, count * config_.hop, sample_rate_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * bins_ * channels_),
            data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * bins_ * channels_), out.data_.begin());
  return out;
}

void ComplexSpectrogram::append_frame(std::span<const cfloat> frame) {
  if (frame.size() != bins_ * channels_) throw ContractError("appended frame has the wrong size");
  data_.insert(data_.end(), frame.begin(), frame.end());
  ++frames_;
}

ComplexSpectrogram analyze(const MultichannelSignal& signal, const StftConfig& config) {
  config.validate();
  const std::size_t frames = config.frames_for(signal.length());
  ComplexSpectrogram spec(frames, signal.channels(), config, signal.length(), signal.sample_rate());
  const Fft fft(config.fft_size);
  const auto window = analysis_window(config);
  std::vector<double> frame(config.fft_size);
  std::vector<std::complex<double>> bins(config.bins());
  const auto pad = static_cast<std::ptrdiff_t>(config.left_pad());
  const auto length = static_cast<std::ptrdiff_t>(signal.length());

  for (std::size_t c = 0; c < signal.channels(); ++c) {
    const auto x = signal.channel(c);
    for (std::size_t t = 0; t < frames; ++t) {
      std::fill(frame.begin(), frame.end(), 0.0);
      for (std::size_t i = 0; i < config.win_length; ++i) {
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(t * config.hop + i) - pad;
        if (n >= 0 && n < length) frame[i] = x[static_cast<std::size_t>(n)];
      }
      windowed_spectrum(fft, window, frame, bins);
      for (std::size_t f = 0; f < bins.size(); ++f) spec.at(t, f, c) = cfloat(bins[f]);
    }
  }
  return spec;
}

MultichannelSignal synthesize(const ComplexSpectrogram& spec, const StftConfig& config) {
  if (!(spec.config() == config)) throw ValidationError("spectrogram was produced with a different STFT configuration");
  return synthesize(spec);
}

MultichannelSignal synthesize(const ComplexSpectrogram& spec) {
  const StftConfig& config = spec.config();
  config.validate();
  MultichannelSignal out(spec.channels(), spec.signal_length(), spec.sample_rate());
  if (spec.frames() == 0) return out;

  const Fft fft(config.fft_size);
  const auto window = analysis_window(config);
  const auto denom = ola_denominator(config);
  const std::size_t span = (spec.frames() - 1) * config.hop + config.win_length;
  std::vector<double> accum(span);
  std::vector<double> frame(config.fft_size);
  std::vector<std::complex<double>> bins(config.bins());

  for (std::size_t c = 0; c < spec.channels(); ++c) {
    std::fill(accum.begin(), accum.end(), 0.0);
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      for (std::size_t f = 0; f < bins.size(); ++f) bins[f] = std::complex<double>(spec.at(t, f, c));
      fft.inverse_real(bins, frame);
      for (std::size_t i = 0; i < config.win_length; ++i) accum[t * config.hop + i] += frame[i] * window[i];
    }
    auto y = out.channel(c);
    for (std::size_t n = 0; n < y.size(); ++n) {
      const std::size_t p = n + config.left_pad();
      y[n] = p < span ? static_cast<float>(accum[p] / denom[p % config.hop]) : 0.0f;
    }
  }
  return out;
}

StftAnalyzer::StftAnalyzer(const StftConfig& config, std::size_t channels)
    : config_(config), channels_(channels), fft_(config.fft_size), window_(analysis_window(config)) {
  config_.validate();
  reset();
}

void StftAnalyzer::reset() {
  history_.assign(channels_ * config_.win_length, 0.0f);
  frames_emitted_ = 0;
}

std::optional<std::vector<cfloat>> StftAnalyzer::push_frame(const MultichannelSignal& block) {
  if (block.channels() != channels_ || block.length() != config_.hop) {
    throw ContractError("push_frame expects exactly " + std::to_string(config_.hop) + " samples on each of " +
                        std::to_string(channels_) + " channels");
  }
  const std::size_t win = config_.win_length;
  const std::size_t hop = config_.hop;
  std::vector<cfloat> out(config_.bins() * channels_);
  std::vector<double> frame(config_.fft_size);
  std::vector<std::complex<double>> bins(config_.bins());
  for (std::size_t c = 0; c < channels_; ++c) {
    float* h = history_.data() + c * win;
    std::copy(h + hop, h + win, h);
    const auto x = block.channel(c);
    std::copy(x.begin(), x.end(), h + (win - hop));
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t i = 0; i < win; ++i) frame[i] = h[i];
    windowed_spectrum(fft_, window_, frame, bins);
    for (std::size_t f = 0; f < bins.size(); ++f) out[f * channels_ + c] = cfloat(bins[f]);
  }
  ++frames_emitted_;
  return out;
}

StftSynthesizer::StftSynthesizer(const StftConfig& config, std::size_t channels, double sample_rate)
    : config_(config),
      channels_(channels),
      sample_rate_(sample_rate),
      fft_(config.fft_size),
      window_(analysis_window(config)),
      denominator_(ola_denominator(config)) {
  config_.validate();
  reset();
}

void StftSynthesizer::reset() {
  accum_.assign(channels_ * config_.win_length, 0.0);
  frames_pushed_ = 0;
}

MultichannelSignal StftSynthesizer::push_frame(std::span<const cfloat> frame_bins) {
  const std::size_t nb = config_.bins();
  if (frame_bins.size() != nb * channels_) throw ContractError("synthesis frame has the wrong size");
  const std::size_t win = config_.win_length;
  const std::size_t hop = config_.hop;
  const std::size_t pad = config_.left_pad();

  // Padded positions [t*hop, (t+1)*hop) become final; the first `pad` padded
  // samples overall are discarded.
  const std::size_t start = frames_pushed_ * hop;
  const std::size_t skip = start >= pad ? 0 : std::min(hop, pad - start);
  MultichannelSignal out(channels_, hop - skip, sample_rate_);

  std::vector<double> frame(config_.fft_size);
  std::vector<std::complex<double>> bins(nb);
  for (std::size_t c = 0; c < channels_; ++c) {
    for (std::size_t f = 0; f < nb; ++f) bins[f] = std::complex<double>(frame_bins[f * channels_ + c]);
    fft_.inverse_real(bins, frame);
    double* acc = accum_.data() + c * win;
    for (std::size_t i = 0; i < win; ++i) acc[i] += frame[i] * window_[i];
    auto y = out.channel(c);
    for (std::size_t i = skip; i < hop; ++i) y[i - skip] = static_cast<float>(acc[i] / denominator_[(start + i) % hop]);
    std::copy(acc + hop, acc + win, acc);
    std::fill(acc + (win - hop), acc + win, 0.0);
  }
  ++frames_pushed_;
  return out;
}

MultichannelSignal StftSynthesizer::flush() {
  const std::size_t win = config_.win_length;
  const std::size_t hop = config_.hop;
  const std::size_t pad = config_.left_pad();
  const std::size_t start = frames_pushed_ * hop;
  const std::size_t pending = frames_pushed_ == 0 ? 0 : win - hop;
  std::size_t skip = start >= pad ? 0 : std::min(pending, pad - start);
  MultichannelSignal out(channels_, pending - skip, sample_rate_);
  for (std::size_t c = 0; c < channels_; ++c) {
    const double* acc = accum_.data() + c * win;
    auto y = out.channel(c);
    for (std::size_t i = skip; i < pending; ++i) y[i - skip] = static_cast<float>(acc[i] / denominator_[(start + i) % hop]);
  }
  reset();
  return out;
}

}  // namespace dualsep
