#include "dualsep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<MultichannelSignal> split_zones(const MultichannelSignal& s) {
  std::vector<MultichannelSignal> out;
  out.reserve(s.channels());
  for (std::size_t c = 0; c < s.channels(); ++c) out.push_back(s.extract(c));
  return out;
}

MultichannelSignal to_raw(const MultichannelSignal& mix, const PipelineConfig& config) {
  if (mix.channels() != config.layout.raw_channels()) {
    throw ContractError("expected " + std::to_string(config.layout.raw_channels()) + " raw channels, got " +
                        std::to_string(mix.channels()));
  }
  if (mix.sample_rate() != config.sample_rate) {
    throw ContractError("input is sampled at " + std::to_string(mix.sample_rate()) + " Hz, pipeline runs at " +
                        std::to_string(config.sample_rate) + " Hz");
  }
  if (mix.layout_kind() == LayoutKind::raw_mics && mix.layout() == config.layout) return mix;
  return mix.as_raw_mics(config.layout);
}

void check_model(const nn::Model* model, const PipelineConfig& config) {
  if (model == nullptr) {
    throw LoadError(LoadError::Kind::missing_tensor, std::string("mode '") + to_string(config.mode) +
                                                         "' runs the network but no weights were given");
  }
  const auto& mc = model->config();
  if (mc.zones != config.layout.zones || mc.bins != config.stft.bins()) {
    throw ContractError("model expects " + std::to_string(mc.zones) + " zones x " + std::to_string(mc.bins) +
                        " bins, pipeline produces " + std::to_string(config.layout.zones) + " x " +
                        std::to_string(config.stft.bins()));
  }
}

std::size_t max_whole_delay(const std::vector<SteeringSpec>& steering, double fs) {
  std::size_t d = 0;
  for (const auto& s : steering) {
    for (double v : s.delays) d = std::max(d, static_cast<std::size_t>(std::llround(v * fs)));
  }
  return d;
}

}  // namespace

const char* to_string(PipelineMode mode) noexcept {
  switch (mode) {
    case PipelineMode::offline: return "offline";
    case PipelineMode::streaming: return "streaming";
    case PipelineMode::dsp_only: return "dsp-only";
    case PipelineMode::bf_only: return "bf-only";
  }
  return "?";
}

PipelineMode mode_from_string(const std::string& s) {
  for (auto m : {PipelineMode::offline, PipelineMode::streaming, PipelineMode::dsp_only, PipelineMode::bf_only}) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown mode '" + s + "' (expected offline, streaming, dsp-only or bf-only)");
}

const char* to_string(IvaMode mode) noexcept { return mode == IvaMode::batch ? "batch" : "block-online"; }

IvaMode iva_mode_from_string(const std::string& s) {
  if (s == "batch") return IvaMode::batch;
  if (s == "block-online") return IvaMode::block_online;
  throw ValidationError("unknown IVA mode '" + s + "' (expected batch or block-online)");
}

std::vector<SteeringSpec> PipelineConfig::resolved_steering() const {
  if (steering.empty()) return {SteeringSpec::broadside(layout.mics_per_zone)};
  return steering;
}

double PipelineConfig::latency_seconds() const {
  double latency = static_cast<double>(stft.win_length) / sample_rate;
  if (iva_mode == IvaMode::block_online && mode != PipelineMode::bf_only) {
    latency += online_iva.latency_seconds(stft, sample_rate);
  }
  return latency;
}

void PipelineConfig::validate() const {
  layout.validate();
  stft.validate();
  if (!(sample_rate > 0.0)) throw ValidationError("sample_rate must be positive");
  const auto s = resolved_steering();
  if (s.size() != 1 && s.size() != layout.zones) throw ValidationError("steering must list one spec per zone or one shared spec");
  for (const auto& spec : s) {
    spec.validate();
    if (spec.delays.size() != layout.mics_per_zone) throw ValidationError("steering delay count must equal mics per zone");
  }
  if (uses_network()) {
    model.validate();
    if (model.zones != layout.zones) throw ValidationError("model zones must equal the number of array zones");
    if (model.bins != stft.bins()) throw ValidationError("model bins must equal the STFT bin count");
  }
  if (mode == PipelineMode::streaming) {
    if (!model.causal) throw ValidationError("streaming mode needs a causal model");
    if (iva_mode != IvaMode::block_online) throw ValidationError("streaming mode needs block-online IVA");
  }
  if (mode == PipelineMode::streaming && steering_lookahead(s, sample_rate) != 0) {
    throw ValidationError("streaming mode needs steering delays in whole samples");
  }
}

StageTimes& StageTimes::operator+=(const StageTimes& o) noexcept {
  bf += o.bf;
  stft += o.stft;
  iva += o.iva;
  nn += o.nn;
  istft += o.istft;
  return *this;
}

std::shared_ptr<const nn::Model> load_model(const PipelineConfig& config) {
  if (!config.uses_network()) return nullptr;
  if (!config.weights_path) {
    throw LoadError(LoadError::Kind::missing_tensor,
                    std::string("mode '") + to_string(config.mode) + "' needs a weight file (--weights)");
  }
  const nn::WeightStore weights = nn::load_weights(*config.weights_path);
  return std::make_shared<const nn::Model>(config.model, weights);
}

MultichannelSignal stack_zones(const std::vector<MultichannelSignal>& zones) {
  if (zones.empty()) return {};
  MultichannelSignal out = MultichannelSignal::per_zone(zones.size(), zones.front().length(), zones.front().sample_rate());
  for (std::size_t z = 0; z < zones.size(); ++z) {
    if (zones[z].length() != out.length()) throw ContractError("zone signals differ in length");
    std::copy(zones[z].channel(0).begin(), zones[z].channel(0).end(), out.channel(z).begin());
  }
  return out;
}

std::vector<MultichannelSignal> separate_offline(const MultichannelSignal& mix, const PipelineConfig& config,
                                                 const nn::Model* model, StageTimes* times) {
  config.validate();
  const MultichannelSignal raw = to_raw(mix, config);
  if (config.uses_network()) check_model(model, config);
  StageTimes local;

  if (config.mode == PipelineMode::streaming) {
    std::shared_ptr<const nn::Model> view(model, [](const nn::Model*) {});
    SeparationStream stream(config, view);
    const std::size_t hop = config.stft.hop;
    const std::size_t blocks = (raw.length() + hop - 1) / hop;
    std::vector<std::vector<float>> acc(config.layout.zones);
    auto append = [&](const MultichannelSignal& part) {
      for (std::size_t z = 0; z < part.channels(); ++z) acc[z].insert(acc[z].end(), part.channel(z).begin(), part.channel(z).end());
    };
    for (std::size_t b = 0; b < blocks; ++b) {
      append(stream.push(raw.slice(b * hop, hop).as_raw_mics(config.layout)));
    }
    append(stream.flush());
    if (times) *times = stream.times();
    std::vector<MultichannelSignal> zones;
    for (auto& samples : acc) {
      samples.resize(raw.length());
      zones.push_back(MultichannelSignal::mono(samples, config.sample_rate));
    }
    return zones;
  }

  auto t0 = Clock::now();
  const MultichannelSignal bf = delay_and_sum(raw, config.resolved_steering());
  local.bf = seconds_since(t0);

  t0 = Clock::now();
  const ComplexSpectrogram spec_bf = analyze(bf, config.stft);
  local.stft = seconds_since(t0);

  ComplexSpectrogram result;
  if (config.mode == PipelineMode::bf_only) {
    result = spec_bf;
  } else {
    t0 = Clock::now();
    ComplexSpectrogram spec_iva = config.iva_mode == IvaMode::batch ? run_iva(spec_bf, config.iva).separated
                                                                    : run_block_online(spec_bf, config.online_iva);
    local.iva = seconds_since(t0);
    if (config.mode == PipelineMode::dsp_only) {
      result = std::move(spec_iva);
    } else {
      t0 = Clock::now();
      result = model->forward(spec_bf, spec_iva).separated;
      local.nn = seconds_since(t0);
    }
  }

  t0 = Clock::now();
  const MultichannelSignal out = synthesize(result, config.stft);
  local.istft = seconds_since(t0);
  if (times) *times = local;
  return split_zones(out);
}

std::vector<MultichannelSignal> separate_offline(const MultichannelSignal& mix, const PipelineConfig& config) {
  config.validate();
  const auto model = load_model(config);
  return separate_offline(mix, config, model.get());
}

SeparationStream::SeparationStream(const PipelineConfig& config, std::shared_ptr<const nn::Model> model)
    : config_(config),
      model_(std::move(model)),
      steering_(config.resolved_steering()),
      analyzer_(config.stft, config.layout.zones),
      iva_(config.stft.bins(), config.layout.zones, config.online_iva),
      synthesizer_(config.stft, config.layout.zones, config.sample_rate) {
  PipelineConfig check = config_;
  if (check.mode == PipelineMode::offline) check.mode = PipelineMode::streaming;
  check.validate();
  if (config_.mode != PipelineMode::bf_only && config_.mode != PipelineMode::dsp_only) {
    config_.mode = PipelineMode::streaming;
    check_model(model_.get(), config_);
    nn_state_ = model_->make_state();
  }
  if (steering_lookahead(steering_, config_.sample_rate) != 0) {
    throw ValidationError("streaming needs steering delays in whole samples");
  }
  max_delay_ = max_whole_delay(steering_, config_.sample_rate);
  history_.assign(config_.layout.raw_channels() * max_delay_, 0.0f);
}

void SeparationStream::run_frame(std::span<const cfloat> frame, MultichannelSignal& out) {
  const auto t0 = Clock::now();
  const MultichannelSignal part = synthesizer_.push_frame(frame);
  times_.istft += seconds_since(t0);
  if (part.length() == 0) return;
  emitted_ += part.length();
  MultichannelSignal grown = MultichannelSignal::per_zone(config_.layout.zones, out.length() + part.length(), config_.sample_rate);
  for (std::size_t z = 0; z < config_.layout.zones; ++z) {
    std::copy(out.channel(z).begin(), out.channel(z).end(), grown.channel(z).begin());
    std::copy(part.channel(z).begin(), part.channel(z).end(), grown.channel(z).begin() + static_cast<std::ptrdiff_t>(out.length()));
  }
  out = std::move(grown);
}

MultichannelSignal SeparationStream::drain(std::vector<std::vector<cfloat>> iva_frames) {
  MultichannelSignal out = MultichannelSignal::per_zone(config_.layout.zones, 0, config_.sample_rate);
  for (auto& frame_iva : iva_frames) {
    std::vector<cfloat> frame_bf = std::move(bf_queue_.front());
    bf_queue_.pop_front();
    if (nn_state_) {
      const auto t0 = Clock::now();
      const auto separated = model_->step(frame_bf, frame_iva, *nn_state_);
      times_.nn += seconds_since(t0);
      run_frame(separated, out);
    } else {
      run_frame(frame_iva, out);
    }
  }
  return out;
}

MultichannelSignal SeparationStream::push(const MultichannelSignal& block) {
  if (flushed_) throw ContractError("push after flush");
  const std::size_t hop = config_.stft.hop;
  if (block.length() != hop) {
    throw ContractError("stream blocks must hold exactly " + std::to_string(hop) + " samples, got " +
                        std::to_string(block.length()));
  }
  const MultichannelSignal raw = to_raw(block, config_);
  const std::size_t channels = config_.layout.raw_channels();

  auto t0 = Clock::now();
  MultichannelSignal bf;
  if (max_delay_ == 0) {
    bf = delay_and_sum(raw, steering_);
  } else {
    MultichannelSignal window = MultichannelSignal::raw_mics(config_.layout, max_delay_ + hop, config_.sample_rate);
    for (std::size_t c = 0; c < channels; ++c) {
      auto dst = window.channel(c);
      std::copy_n(history_.begin() + static_cast<std::ptrdiff_t>(c * max_delay_), max_delay_, dst.begin());
      std::copy(raw.channel(c).begin(), raw.channel(c).end(), dst.begin() + static_cast<std::ptrdiff_t>(max_delay_));
      std::copy_n(dst.end() - static_cast<std::ptrdiff_t>(max_delay_), max_delay_,
                  history_.begin() + static_cast<std::ptrdiff_t>(c * max_delay_));
    }
    bf = delay_and_sum(window, steering_).slice(max_delay_, hop);
  }
  times_.bf += seconds_since(t0);
  pushed_ += hop;

  t0 = Clock::now();
  auto frame = analyzer_.push_frame(bf);
  times_.stft += seconds_since(t0);
  if (!frame) return MultichannelSignal::per_zone(config_.layout.zones, 0, config_.sample_rate);

  if (config_.mode == PipelineMode::bf_only) {
    bf_queue_.push_back(*frame);
    return drain({std::move(*frame)});
  }
  bf_queue_.push_back(*frame);
  t0 = Clock::now();
  auto ready = iva_.push_frame(*frame);
  times_.iva += seconds_since(t0);
  return drain(std::move(ready));
}

MultichannelSignal SeparationStream::flush() {
  if (flushed_) throw ContractError("flush called twice");
  flushed_ = true;
  const std::size_t emitted_before = emitted_;
  const std::size_t zones = config_.layout.zones;
  MultichannelSignal out = MultichannelSignal::per_zone(zones, 0, config_.sample_rate);
  auto append = [&](const MultichannelSignal& part) {
    if (part.length() == 0) return;
    MultichannelSignal grown = MultichannelSignal::per_zone(zones, out.length() + part.length(), config_.sample_rate);
    for (std::size_t z = 0; z < zones; ++z) {
      std::copy(out.channel(z).begin(), out.channel(z).end(), grown.channel(z).begin());
      std::copy(part.channel(z).begin(), part.channel(z).end(),
                grown.channel(z).begin() + static_cast<std::ptrdiff_t>(out.length()));
    }
    out = std::move(grown);
  };

  // Trailing frames past the last input sample see zero beamformer output,
  // exactly as the offline analysis pads.
  const MultichannelSignal zeros = MultichannelSignal::per_zone(zones, config_.stft.hop, config_.sample_rate);
  while (analyzer_.frames_emitted() < config_.stft.frames_for(pushed_)) {
    auto t0 = Clock::now();
    auto frame = analyzer_.push_frame(zeros);
    times_.stft += seconds_since(t0);
    if (!frame) continue;
    bf_queue_.push_back(*frame);
    if (config_.mode == PipelineMode::bf_only) {
      append(drain({std::move(*frame)}));
    } else {
      t0 = Clock::now();
      auto ready = iva_.push_frame(*frame);
      times_.iva += seconds_since(t0);
      append(drain(std::move(ready)));
    }
  }
  if (config_.mode != PipelineMode::bf_only) {
    auto t0 = Clock::now();
    auto rest = iva_.flush();
    times_.iva += seconds_since(t0);
    append(drain(std::move(rest)));
  }
  auto t0 = Clock::now();
  append(synthesizer_.flush());
  times_.istft += seconds_since(t0);

  // Everything after the last pushed sample is analysis padding.
  const std::size_t keep = pushed_ - emitted_before;
  return out.slice(0, std::min(keep, out.length()));
}

std::unique_ptr<SeparationStream> open_stream(const PipelineConfig& config, std::shared_ptr<const nn::Model> model) {
  return std::make_unique<SeparationStream>(config, std::move(model));
}

RtfReport measure_rtf(const std::function<void(StageTimes&)>& run, double duration, std::size_t repeats) {
  if (!(duration > 0.0)) throw ValidationError("RTF needs a positive audio duration");
  if (repeats < 1) throw ValidationError("RTF needs at least one repeat");
  RtfReport report;
  report.audio_seconds = duration;
  for (std::size_t r = 0; r < repeats; ++r) {
    StageTimes stages;
    const auto t0 = Clock::now();
    run(stages);
    report.rtf.push_back(seconds_since(t0) / duration);
    report.stage_seconds += stages;
  }
  const double inv = 1.0 / static_cast<double>(repeats);
  report.stage_seconds.bf *= inv;
  report.stage_seconds.stft *= inv;
  report.stage_seconds.iva *= inv;
  report.stage_seconds.nn *= inv;
  report.stage_seconds.istft *= inv;
  std::vector<double> sorted = report.rtf;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  report.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  report.p95 = sorted[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1];
  return report;
}

RtfReport measure_rtf(const PipelineConfig& config, std::shared_ptr<const nn::Model> model, double duration,
                      std::size_t repeats, std::uint64_t seed) {
  if (duration < 5.0) throw ValidationError("RTF measurements need at least 5 s of audio");
  config.validate();
  const std::size_t hop = config.stft.hop;
  const auto length = static_cast<std::size_t>(std::llround(duration * config.sample_rate / static_cast<double>(hop))) * hop;
  MultichannelSignal mix = MultichannelSignal::raw_mics(config.layout, length, config.sample_rate);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (float& v : mix.samples()) v = noise(rng);

  auto run = [&](StageTimes& stages) {
    if (config.mode == PipelineMode::streaming) {
      SeparationStream stream(config, model);
      for (std::size_t b = 0; b * hop < length; ++b) stream.push(mix.slice(b * hop, hop).as_raw_mics(config.layout));
      stream.flush();
      stages = stream.times();
    } else {
      separate_offline(mix, config, model.get(), &stages);
    }
  };
  RtfReport report = measure_rtf(run, static_cast<double>(length) / config.sample_rate, repeats);
  report.latency_seconds = config.latency_seconds();
  return report;
}

}  // namespace dualsep
