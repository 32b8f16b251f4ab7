#pragma once

#include <cstddef>
#include <random>

#include "dualsep/signal.hpp"

namespace dualsep {

struct SurrogateParams {
  double min_syllable = 0.12;  // seconds
  double max_syllable = 0.32;
  double max_pause = 0.18;
  double min_f0 = 90.0;  // Hz
  double max_f0 = 260.0;
  /// Mix of pulse-train (voiced) and noise (unvoiced) excitation.
  double voicing = 0.7;
};

/// Speech-like mono test signal: syllables of formant-filtered pulse-plus-noise
/// excitation under a raised-cosine envelope, separated by short pauses.
/// Normalized to unit RMS (zero length gives an empty signal).
MultichannelSignal speech_surrogate(std::size_t length, std::mt19937_64& rng, double sample_rate = kPipelineSampleRate,
                                    const SurrogateParams& params = {});

}  // namespace dualsep
