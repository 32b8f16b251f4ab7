#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dualsep/stft.hpp"

namespace dualsep {

using cdouble = std::complex<double>;

enum class Contrast { spherical_laplace };

/// Per-bin M x M unmixing matrices plus the update hyperparameters.
struct UnmixingState {
  std::vector<Eigen::MatrixXcd> W;  // one per frequency bin
  double eta = 0.1;
  std::size_t iterations = 0;
  Contrast contrast = Contrast::spherical_laplace;
  double epsilon = 1e-8;
  /// Set when a singular W_f had to be regularized with epsilon * I.
  bool regularized = false;

  std::size_t bins() const noexcept { return W.size(); }
  std::size_t channels() const noexcept { return W.empty() ? 0 : static_cast<std::size_t>(W.front().rows()); }
};

struct IvaParams {
  double eta = 0.1;
  std::size_t max_iter = 100;
  double tol = 1e-4;
  double epsilon = 1e-8;
  /// Step-size halvings tried when a step would raise the objective.
  std::size_t max_halvings = 5;
  /// Reorder outputs so channel k tracks the input channel it correlates with most.
  bool match_zones = true;
};

struct OnlineIvaParams {
  std::size_t block_frames = 62;
  double eta = 0.1;
  std::size_t inner_iters = 2;
  double tol = 1e-4;
  double epsilon = 1e-8;
  std::size_t max_halvings = 5;
  bool match_zones = true;

  /// Delay between a frame entering and its unmixed version leaving.
  double latency_seconds(const StftConfig& stft, double sample_rate) const {
    return static_cast<double>(block_frames * stft.hop) / sample_rate;
  }
};

/// W_f = I for every bin.
UnmixingState init_identity(std::size_t bins, std::size_t channels, double eta = 0.1, double epsilon = 1e-8);

/// out(t, f) = W_f * in(t, f).
ComplexSpectrogram apply_unmixing(const UnmixingState& state, const ComplexSpectrogram& spec);

/// One natural-gradient step on `spec` with step size state.eta:
///   W_f <- W_f - eta * ((1/T) sum_t g(y_t) y_t^H - I) W_f,
/// where g(y)_{k,f} = y_{k,f} / max(||y_k||, eps) and ||y_k|| spans every bin of
/// source k in frame t.
UnmixingState gradient_step(const UnmixingState& state, const ComplexSpectrogram& spec);

/// (1/T) sum_t sum_k ||y_{k,t}|| - sum_f log|det W_f|.
double iva_objective(const UnmixingState& state, const ComplexSpectrogram& spec);

/// W_f <- diag(W_f^{-1}) W_f: output k becomes the image of source k at input channel k.
void apply_minimal_distortion(UnmixingState& state);

/// Greedy max-correlation assignment of output channels to input channels on
/// spectral magnitudes. result[zone] = output channel assigned to that zone.
std::vector<std::size_t> match_zones(const ComplexSpectrogram& separated, const ComplexSpectrogram& reference);

struct IvaResult {
  ComplexSpectrogram separated;
  UnmixingState state;
  /// Objective after every accepted step, preceded by the initial value.
  std::vector<double> objective_trace;
  std::vector<std::size_t> permutation;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Batch IVA over the whole spectrogram, then zone matching and
/// minimal-distortion scaling.
IvaResult run_iva(const ComplexSpectrogram& spec, const IvaParams& params = {});

/// Block-online IVA: frames are buffered into blocks of block_frames; each
/// block warm-starts from the previous block's matrices, runs inner_iters
/// steps on that block, and is emitted unmixed.
class BlockOnlineIva {
 public:
  BlockOnlineIva(std::size_t bins, std::size_t channels, const OnlineIvaParams& params = {});

  /// Takes one [bin][channel] frame; returns the separated frames of a block
  /// when it completes (otherwise nothing).
  std::vector<std::vector<cfloat>> push_frame(std::span<const cfloat> frame);
  /// Processes the trailing partial block.
  std::vector<std::vector<cfloat>> flush();
  void reset();

  const UnmixingState& state() const noexcept { return state_; }
  std::size_t blocks_processed() const noexcept { return blocks_; }
  const OnlineIvaParams& params() const noexcept { return params_; }

 private:
  std::vector<std::vector<cfloat>> process_block();

  std::size_t bins_;
  std::size_t channels_;
  OnlineIvaParams params_;
  UnmixingState state_;
  std::vector<std::vector<cfloat>> pending_;
  std::size_t blocks_ = 0;
};

/// Runs BlockOnlineIva over a whole spectrogram.
ComplexSpectrogram run_block_online(const ComplexSpectrogram& spec, const OnlineIvaParams& params = {});

}  // namespace dualsep
