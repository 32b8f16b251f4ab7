#include "dualsep/nn/model.hpp"

#include <string>

#include "dualsep/error.hpp"

namespace dualsep::nn {
namespace {

using Index = Eigen::Index;

// Mask planes (real, imag) times the beamformed spectrum, written to `out`.
void apply_mask(const Frame& planes, std::span<const cfloat> bf, std::size_t bins, std::size_t zones,
                std::span<cfloat> mask, std::span<cfloat> out) {
  for (std::size_t z = 0; z < zones; ++z) {
    for (std::size_t f = 0; f < bins; ++f) {
      const auto col = static_cast<Index>(z * bins + f);
      const cfloat m(planes(0, col), planes(1, col));
      mask[f * zones + z] = m;
      out[f * zones + z] = m * bf[f * zones + z];
    }
  }
}

}  // namespace

FeatureTensor features_from_spectra(const ComplexSpectrogram& spec) {
  FeatureTensor t;
  t.zones = spec.channels();
  t.bins = spec.bins();
  t.frames.reserve(spec.frames());
  for (std::size_t i = 0; i < spec.frames(); ++i) t.frames.push_back(frame_features(spec.frame(i), t.bins, t.zones));
  return t;
}

Frame frame_features(std::span<const cfloat> frame, std::size_t bins, std::size_t zones) {
  if (frame.size() != bins * zones) throw ContractError("spectral frame does not hold bins x zones values");
  Frame x(2, static_cast<Index>(zones * bins));
  for (std::size_t f = 0; f < bins; ++f) {
    for (std::size_t z = 0; z < zones; ++z) {
      const cfloat v = frame[f * zones + z];
      x(0, static_cast<Index>(z * bins + f)) = v.real();
      x(1, static_cast<Index>(z * bins + f)) = v.imag();
    }
  }
  return x;
}

void StreamState::reset() {
  for (auto* blocks : {&spectral, &spatial, &decoder}) {
    for (auto& b : *blocks) {
      b.conv_in.clear();
      for (auto& t : b.tfcms) t.tconv_in.clear();
    }
  }
  for (auto& h : t_hidden) h.setZero();
  frames = 0;
}

Model::Model(const ModelConfig& config, const WeightStore& weights) : config_(config) {
  config_.validate();
  weights.validate_against(config_);
  const std::size_t blocks = config_.enc_channels.size();
  for (std::size_t b = 0; b < blocks; ++b) {
    spectral_.push_back(load_gated_block(weights, "spectral_enc.b" + std::to_string(b), Direction::down, config_));
    spatial_.push_back(load_gated_block(weights, "spatial_enc.b" + std::to_string(b), Direction::down, config_));
    decoder_.push_back(load_gated_block(weights, "decoder.b" + std::to_string(b), Direction::up, config_));
  }
  if (config_.variant == Variant::L) fusion_ = load_linear(weights, "fusion");
  for (std::size_t l = 0; l < config_.triple_path_layers; ++l) {
    triple_path_.push_back(load_triple_path(weights, "tp" + std::to_string(l), config_.causal));
  }
}

Frame Model::fuse(const Frame& spectral, const Frame& spatial) const {
  if (config_.variant == Variant::S) return spectral + spatial;
  Frame cat(spectral.rows() + spatial.rows(), spectral.cols());
  cat.topRows(spectral.rows()) = spectral;
  cat.bottomRows(spatial.rows()) = spatial;
  Frame out;
  linear_frame(fusion_, cat, out);
  return out;
}

void Model::check_spectrum(const ComplexSpectrogram& spec, const char* what) const {
  if (spec.channels() != config_.zones || spec.bins() != config_.bins) {
    throw ContractError(std::string(what) + " spectrum must have " + std::to_string(config_.zones) + " zones of " +
                        std::to_string(config_.bins) + " bins, got " + std::to_string(spec.channels()) + " x " +
                        std::to_string(spec.bins()));
  }
}

ModelOutput Model::forward(const ComplexSpectrogram& spec_bf, const ComplexSpectrogram& spec_iva) const {
  check_spectrum(spec_bf, "beamformed");
  check_spectrum(spec_iva, "IVA");
  if (spec_bf.frames() != spec_iva.frames()) throw ContractError("beamformed and IVA spectra differ in frame count");
  const bool causal = config_.causal;

  FeatureTensor a = features_from_spectra(spec_bf);
  FeatureTensor b = features_from_spectra(spec_iva);
  for (std::size_t i = 0; i < spectral_.size(); ++i) {
    a = gated_block_forward(a, spectral_[i], causal);
    b = gated_block_forward(b, spatial_[i], causal);
  }
  FeatureTensor x;
  x.zones = a.zones;
  x.bins = a.bins;
  x.frames.resize(a.time());
  for (std::size_t t = 0; t < a.time(); ++t) x.frames[t] = fuse(a.frames[t], b.frames[t]);
  for (const auto& tp : triple_path_) x = triple_path_forward(x, tp, causal);
  for (const auto& block : decoder_) x = gated_block_forward(x, block, causal);

  ModelOutput out{ComplexSpectrogram(spec_bf.frames(), config_.zones, spec_bf.config(), spec_bf.signal_length(),
                                     spec_bf.sample_rate()),
                  ComplexSpectrogram(spec_bf.frames(), config_.zones, spec_bf.config(), spec_bf.signal_length(),
                                     spec_bf.sample_rate())};
  for (std::size_t t = 0; t < x.time(); ++t) {
    apply_mask(x.frames[t], spec_bf.frame(t), config_.bins, config_.zones, out.masks.frame(t), out.separated.frame(t));
  }
  return out;
}

StreamState Model::make_state() const {
  StreamState s;
  for (const auto& b : spectral_) s.spectral.push_back(make_block_state(b));
  for (const auto& b : spatial_) s.spatial.push_back(make_block_state(b));
  for (const auto& b : decoder_) s.decoder.push_back(make_block_state(b));
  const auto cols = static_cast<Index>(config_.zones * config_.latent_bins());
  s.t_hidden.assign(triple_path_.size(), Frame::Zero(static_cast<Index>(config_.hidden), cols));
  return s;
}

std::vector<cfloat> Model::step(std::span<const cfloat> frame_bf, std::span<const cfloat> frame_iva, StreamState& state,
                                std::vector<cfloat>* mask) const {
  if (!config_.causal) throw ContractError("frame-by-frame inference needs a causal model");
  if (state.spectral.size() != spectral_.size() || state.t_hidden.size() != triple_path_.size()) {
    throw ContractError("stream state does not match the model");
  }
  const std::size_t Z = config_.zones;
  Frame a = frame_features(frame_bf, config_.bins, Z);
  Frame b = frame_features(frame_iva, config_.bins, Z);
  Frame tmp;
  std::size_t bins = config_.bins;
  for (std::size_t i = 0; i < spectral_.size(); ++i) {
    gated_block_step(spectral_[i], a, Z, bins, state.spectral[i], tmp);
    a.swap(tmp);
    bins = gated_block_step(spatial_[i], b, Z, bins, state.spatial[i], tmp);
    b.swap(tmp);
  }
  Frame x = fuse(a, b);
  for (std::size_t l = 0; l < triple_path_.size(); ++l) {
    triple_path_step(triple_path_[l], x, Z, bins, state.t_hidden[l], tmp);
    x.swap(tmp);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    bins = gated_block_step(decoder_[i], x, Z, bins, state.decoder[i], tmp);
    x.swap(tmp);
  }
  std::vector<cfloat> out(config_.bins * Z);
  std::vector<cfloat> m(config_.bins * Z);
  apply_mask(x, frame_bf, config_.bins, Z, m, out);
  if (mask != nullptr) *mask = std::move(m);
  ++state.frames;
  return out;
}

ModelOutput model_forward(const ComplexSpectrogram& spec_bf, const ComplexSpectrogram& spec_iva,
                          const WeightStore& weights, const ModelConfig& config) {
  return Model(config, weights).forward(spec_bf, spec_iva);
}

std::vector<cfloat> model_step(std::span<const cfloat> frame_bf, std::span<const cfloat> frame_iva, StreamState& state,
                               const WeightStore& weights, const ModelConfig& config) {
  return Model(config, weights).step(frame_bf, frame_iva, state);
}

void rig_unit_mask(WeightStore& weights, const ModelConfig& config) {
  const std::string prefix = "decoder.b" + std::to_string(config.enc_channels.size() - 1) + ".gdeconv";
  Tensor& w = weights.get(prefix + ".weight");
  std::fill(w.data.begin(), w.data.end(), 0.0f);
  Tensor& bias = weights.get(prefix + ".bias");
  // Content planes (real, imag) then their gates; sigmoid(30) rounds to 1.0f.
  bias.data = {1.0f, 0.0f, 30.0f, 30.0f};
}

}  // namespace dualsep::nn
