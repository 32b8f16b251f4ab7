#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dualsep/fft.hpp"
#include "dualsep/signal.hpp"

namespace dualsep {

using cfloat = std::complex<float>;

enum class WindowKind { hann };

/// 512-point FFT, 32 ms Hann window, 16 ms hop at 16 kHz by default.
struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t win_length = 512;
  std::size_t hop = 256;
  WindowKind window = WindowKind::hann;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }
  /// Zeros prepended to the signal so frame t ends at sample t*hop + hop - 1.
  std::size_t left_pad() const noexcept { return win_length - hop; }
  /// Frames produced for a signal of `length` samples; every sample is covered
  /// by all the frames that overlap it.
  std::size_t frames_for(std::size_t length) const noexcept;

  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

/// Periodic Hann of length win_length, zero-padded at the end to fft_size.
std::vector<double> analysis_window(const StftConfig& config);

/// Per-phase overlap-add normalizer: denom[j] = sum_k w(j + k*hop)^2.
std::vector<double> ola_denominator(const StftConfig& config);

/// Complex spectra stored [frame][bin][channel].
class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t frames, std::size_t channels, const StftConfig& config, std::size_t signal_length,
                     double sample_rate = kPipelineSampleRate);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t bins() const noexcept { return bins_; }
  std::size_t channels() const noexcept { return channels_; }
  const StftConfig& config() const noexcept { return config_; }
  std::size_t signal_length() const noexcept { return signal_length_; }
  double sample_rate() const noexcept { return sample_rate_; }

  cfloat& at(std::size_t t, std::size_t f, std::size_t c) { return data_[(t * bins_ + f) * channels_ + c]; }
  const cfloat& at(std::size_t t, std::size_t f, std::size_t c) const { return data_[(t * bins_ + f) * channels_ + c]; }

  /// One frame, laid out [bin][channel].
  std::span<cfloat> frame(std::size_t t) { return {data_.data() + t * bins_ * channels_, bins_ * channels_}; }
  std::span<const cfloat> frame(std::size_t t) const { return {data_.data() + t * bins_ * channels_, bins_ * channels_}; }

  std::span<cfloat> data() noexcept { return data_; }
  std::span<const cfloat> data() const noexcept { return data_; }

  /// Frames [begin, begin+count) as a standalone spectrogram.
  ComplexSpectrogram frames_range(std::size_t begin, std::size_t count) const;
  /// Appends one [bin][channel] frame.
  void append_frame(std::span<const cfloat> frame);

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::size_t channels_ = 0;
  StftConfig config_{};
  std::size_t signal_length_ = 0;
  double sample_rate_ = kPipelineSampleRate;
  std::vector<cfloat> data_;
};

/// Onesided STFT of every channel. Frame t covers the left-padded samples
/// [t*hop, t*hop + win), i.e. original samples up to t*hop + hop - 1.
ComplexSpectrogram analyze(const MultichannelSignal& signal, const StftConfig& config = {});

/// Weighted overlap-add with the squared-window normalizer; trims the
/// analysis padding and returns signal_length() samples per channel.
MultichannelSignal synthesize(const ComplexSpectrogram& spec);
/// As above, but first checks that the spectrogram was made with `config`.
MultichannelSignal synthesize(const ComplexSpectrogram& spec, const StftConfig& config);

/// Frame-push analysis. Each push of exactly `hop` samples per channel yields
/// the next frame, identical to the matching analyze() frame.
class StftAnalyzer {
 public:
  StftAnalyzer(const StftConfig& config, std::size_t channels);

  /// `block` holds `hop` samples per channel. Returns one [bin][channel] frame.
  std::optional<std::vector<cfloat>> push_frame(const MultichannelSignal& block);
  void reset();

  std::size_t frames_emitted() const noexcept { return frames_emitted_; }
  /// Samples that must have arrived before frame t is available.
  std::size_t samples_needed_for_frame(std::size_t t) const noexcept { return (t + 1) * config_.hop; }
  /// Algorithmic latency in samples (the window length).
  std::size_t latency_samples() const noexcept { return config_.win_length; }

 private:
  StftConfig config_;
  std::size_t channels_;
  Fft fft_;
  std::vector<double> window_;
  std::vector<float> history_;  // [channel][win_length]
  std::size_t frames_emitted_ = 0;
};

/// Frame-push overlap-add. After frame t is pushed, original samples
/// [(t-1)*hop, t*hop) are final and returned.
class StftSynthesizer {
 public:
  StftSynthesizer(const StftConfig& config, std::size_t channels, double sample_rate = kPipelineSampleRate);

  /// Adds one [bin][channel] frame and returns the hop samples it completed
  /// (empty for the very first frame, whose completed samples are padding).
  MultichannelSignal push_frame(std::span<const cfloat> frame);
  /// Returns every sample still pending in the overlap buffer.
  MultichannelSignal flush();
  void reset();

 private:
  StftConfig config_;
  std::size_t channels_;
  double sample_rate_;
  Fft fft_;
  std::vector<double> window_;
  std::vector<double> denominator_;
  std::vector<double> accum_;  // [channel][win_length], starts at the current completed position
  std::size_t frames_pushed_ = 0;
};

}  // namespace dualsep
