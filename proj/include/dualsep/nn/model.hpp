#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualsep/nn/config.hpp"
#include "dualsep/nn/layers.hpp"
#include "dualsep/nn/weights.hpp"
#include "dualsep/stft.hpp"

namespace dualsep::nn {

/// Real and imaginary planes of every zone: frames of shape 2 x (Z * F).
FeatureTensor features_from_spectra(const ComplexSpectrogram& spec);
/// Same for one [bin][channel] frame.
Frame frame_features(std::span<const cfloat> frame, std::size_t bins, std::size_t zones);

struct ModelOutput {
  ComplexSpectrogram masks;      // one complex mask per zone
  ComplexSpectrogram separated;  // masks applied to the beamformed spectrum
};

/// Caches for frame-by-frame inference. Sizes depend only on the config.
struct StreamState {
  std::vector<GatedBlockState> spectral, spatial, decoder;
  std::vector<Frame> t_hidden;  // one per triple-path layer
  std::size_t frames = 0;

  void reset();
};

/// Loaded network. Weights are validated against the config on construction
/// and converted to compute layouts once; forward and step are const, so one
/// Model can serve many streams.
class Model {
 public:
  Model(const ModelConfig& config, const WeightStore& weights);

  const ModelConfig& config() const noexcept { return config_; }

  /// Whole-utterance inference. Both spectrograms must share frame count and
  /// carry config().zones channels of config().bins bins.
  ModelOutput forward(const ComplexSpectrogram& spec_bf, const ComplexSpectrogram& spec_iva) const;

  StreamState make_state() const;

  /// One causal frame: [bin][zone] inputs, returns the separated [bin][zone]
  /// frame. `mask`, when given, receives the mask frame.
  std::vector<cfloat> step(std::span<const cfloat> frame_bf, std::span<const cfloat> frame_iva, StreamState& state,
                           std::vector<cfloat>* mask = nullptr) const;

 private:
  Frame fuse(const Frame& spectral, const Frame& spatial) const;
  void check_spectrum(const ComplexSpectrogram& spec, const char* what) const;

  ModelConfig config_;
  std::vector<GatedBlockParams> spectral_, spatial_, decoder_;
  LinearParams fusion_;
  std::vector<TriplePathParams> triple_path_;
};

ModelOutput model_forward(const ComplexSpectrogram& spec_bf, const ComplexSpectrogram& spec_iva,
                          const WeightStore& weights, const ModelConfig& config);

/// Convenience wrapper that rebuilds the Model every call; prefer Model::step
/// in loops.
std::vector<cfloat> model_step(std::span<const cfloat> frame_bf, std::span<const cfloat> frame_iva, StreamState& state,
                               const WeightStore& weights, const ModelConfig& config);

/// Forces the decoder to emit the mask 1+0j everywhere: zero weights on the
/// last transposed conv, content biases (1, 0) and saturated gates.
void rig_unit_mask(WeightStore& weights, const ModelConfig& config);

}  // namespace dualsep::nn
