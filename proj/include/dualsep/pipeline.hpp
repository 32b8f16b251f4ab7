#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dualsep/beamform.hpp"
#include "dualsep/iva.hpp"
#include "dualsep/nn/model.hpp"
#include "dualsep/signal.hpp"
#include "dualsep/stft.hpp"

namespace dualsep {

/// offline: BF, IVA and the network over the whole utterance.
/// streaming: the same chain pushed hop by hop (causal model, block IVA).
/// dsp_only: BF then IVA, no network. bf_only: BF alone.
enum class PipelineMode { offline, streaming, dsp_only, bf_only };
enum class IvaMode { batch, block_online };

const char* to_string(PipelineMode mode) noexcept;
PipelineMode mode_from_string(const std::string& s);
const char* to_string(IvaMode mode) noexcept;
IvaMode iva_mode_from_string(const std::string& s);

struct PipelineConfig {
  ChannelLayout layout{6, 4};
  double sample_rate = kPipelineSampleRate;
  StftConfig stft{};
  /// One spec per zone, a single shared spec, or empty for broadside.
  std::vector<SteeringSpec> steering;
  IvaMode iva_mode = IvaMode::batch;
  IvaParams iva{};
  OnlineIvaParams online_iva{};
  nn::ModelConfig model{};
  std::optional<std::filesystem::path> weights_path;
  PipelineMode mode = PipelineMode::offline;

  bool uses_network() const noexcept { return mode == PipelineMode::offline || mode == PipelineMode::streaming; }
  std::vector<SteeringSpec> resolved_steering() const;
  /// Window plus IVA block delay when IVA runs block-online.
  double latency_seconds() const;
  /// Streaming needs a causal model, block-online IVA and whole-sample steering.
  void validate() const;
};

/// Wall-clock seconds spent per stage.
struct StageTimes {
  double bf = 0.0;
  double stft = 0.0;
  double iva = 0.0;
  double nn = 0.0;
  double istft = 0.0;

  double total() const noexcept { return bf + stft + iva + nn + istft; }
  StageTimes& operator+=(const StageTimes& o) noexcept;
};

/// Loads config.weights_path for network modes; nullptr for DSP modes.
/// Throws LoadError when a network mode has no weights.
std::shared_ptr<const nn::Model> load_model(const PipelineConfig& config);

/// Runs the configured mode on a raw P*M microphone mix and returns one mono
/// signal per zone, each as long as the input. `model` may be null for DSP
/// modes; network modes throw LoadError without it.
std::vector<MultichannelSignal> separate_offline(const MultichannelSignal& mix, const PipelineConfig& config,
                                                 const nn::Model* model, StageTimes* times = nullptr);
/// As above, loading weights from config.weights_path.
std::vector<MultichannelSignal> separate_offline(const MultichannelSignal& mix, const PipelineConfig& config);

/// Per-zone signals stacked into one multichannel signal.
MultichannelSignal stack_zones(const std::vector<MultichannelSignal>& zones);

/// Hop-by-hop separation. Each push takes exactly `hop` raw samples per
/// channel and returns the per-zone samples that became final (zero samples
/// until an IVA block completes). flush() drains everything; pushing
/// afterwards is a contract error. Concatenated outputs reproduce the
/// offline causal chain with the same block schedule.
class SeparationStream {
 public:
  SeparationStream(const PipelineConfig& config, std::shared_ptr<const nn::Model> model);

  MultichannelSignal push(const MultichannelSignal& block);
  MultichannelSignal flush();

  const StageTimes& times() const noexcept { return times_; }
  double latency_seconds() const { return config_.latency_seconds(); }
  std::size_t samples_pushed() const noexcept { return pushed_; }

 private:
  void run_frame(std::span<const cfloat> frame_bf, MultichannelSignal& out);
  MultichannelSignal drain(std::vector<std::vector<cfloat>> iva_frames);

  PipelineConfig config_;
  std::shared_ptr<const nn::Model> model_;
  std::vector<SteeringSpec> steering_;
  std::size_t max_delay_ = 0;
  std::vector<float> history_;  // [raw channel][max_delay_]
  StftAnalyzer analyzer_;
  BlockOnlineIva iva_;
  std::deque<std::vector<cfloat>> bf_queue_;
  std::optional<nn::StreamState> nn_state_;
  StftSynthesizer synthesizer_;
  StageTimes times_;
  std::size_t pushed_ = 0;
  std::size_t emitted_ = 0;
  bool flushed_ = false;
};

std::unique_ptr<SeparationStream> open_stream(const PipelineConfig& config, std::shared_ptr<const nn::Model> model);

struct RtfReport {
  double audio_seconds = 0.0;
  std::vector<double> rtf;  // one per repeat
  double median = 0.0;
  double p95 = 0.0;
  StageTimes stage_seconds;  // mean over repeats
  double latency_seconds = 0.0;
};

/// Times `run` (which fills in its stage times) `repeats` times on
/// `duration` seconds of audio. RTF = processing time / duration.
RtfReport measure_rtf(const std::function<void(StageTimes&)>& run, double duration, std::size_t repeats);

/// Times the configured pipeline on seeded noise. Streaming mode pushes hop
/// blocks; every other mode runs separate_offline.
RtfReport measure_rtf(const PipelineConfig& config, std::shared_ptr<const nn::Model> model, double duration,
                      std::size_t repeats, std::uint64_t seed = 0);

}  // namespace dualsep
