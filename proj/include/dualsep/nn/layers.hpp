#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualsep/nn/config.hpp"
#include "dualsep/nn/weights.hpp"

namespace dualsep::nn {

/// One time frame of activations: rows are features, column z * bins + f
/// holds zone z at frequency f. Zones share every convolution. Row-major so
/// per-channel work runs over contiguous memory.
using Frame = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Activations [time T][feature D][zone Z][freq F].
struct FeatureTensor {
  std::size_t zones = 0;
  std::size_t bins = 0;
  std::vector<Frame> frames;

  static FeatureTensor zeros(std::size_t time, std::size_t features, std::size_t zones, std::size_t bins);

  std::size_t time() const noexcept { return frames.size(); }
  std::size_t features() const noexcept { return frames.empty() ? 0 : static_cast<std::size_t>(frames.front().rows()); }
  float& at(std::size_t t, std::size_t d, std::size_t z, std::size_t f) {
    return frames[t](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(z * bins + f));
  }
  float at(std::size_t t, std::size_t d, std::size_t z, std::size_t f) const {
    return frames[t](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(z * bins + f));
  }
};

/// Time-frequency convolution shared across zones. The frequency axis is
/// padded symmetrically so a stride-2 layer yields ceil(F/2) bins (or 2F-1
/// when transposed). Time tap j of a causal layer reads frame
/// t - (kt-1-j)*dt; a non-causal layer splits the (kt-1)*dt padding, left
/// half rounded down.
struct Conv2dParams {
  std::size_t in = 1, out = 1;
  std::size_t kf = 1, kt = 1;
  std::size_t sf = 1, df = 1, dt = 1;
  bool transposed_f = false;
  Eigen::MatrixXf weight;  // out x (in * kt * kf), column (c * kt + j) * kf + i
  Eigen::VectorXf bias;

  std::size_t out_bins(std::size_t in_bins) const;
  std::ptrdiff_t tap_offset(std::size_t j, bool causal) const;
  /// Past frames the layer reads.
  std::size_t history(bool causal) const;

  /// Weight tensor [out, in, kf, kt]; for transposed layers [in, out, kf, kt].
  static Conv2dParams from_tensors(const Tensor& weight, const Tensor& bias, std::size_t sf, std::size_t df,
                                   std::size_t dt, bool transposed_f);
};

/// Per-channel convolution along frequency with `dilation`, shape preserving.
struct DepthwiseFreqParams {
  std::size_t channels = 1, k = 3, dilation = 1;
  Eigen::MatrixXf weight;  // channels x k
  Eigen::VectorXf bias;
};

/// Layer norm over the feature axis followed by per-channel PReLU.
struct NormActParams {
  Eigen::VectorXf gamma, beta, slope;
  static constexpr float kEps = 1e-5f;
};

struct TfcmParams {
  std::size_t dilation = 1;
  Conv2dParams pw;
  NormActParams pw_norm;
  DepthwiseFreqParams fconv;
  NormActParams fconv_norm;
  Conv2dParams tconv;
  NormActParams tconv_norm;
};

enum class Direction { down, up };

/// Down: gated strided conv then the TFCM stack. Up: the TFCM stack then a
/// gated transposed conv.
struct GatedBlockParams {
  Direction direction = Direction::down;
  Conv2dParams conv;  // emits 2C channels: content then gate
  std::vector<TfcmParams> tfcms;
};

/// Gated recurrent unit, PyTorch gate order (reset, update, new).
struct GruParams {
  std::size_t in = 0, hidden = 0;
  Eigen::MatrixXf w_ih, w_hh;
  Eigen::VectorXf b_ih, b_hh;
};

struct LinearParams {
  Eigen::MatrixXf weight;  // out x in
  Eigen::VectorXf bias;
};

/// F-RNN (bidirectional over frequency), S-RNN (over zones), T-RNN (over
/// time; bidirectional when not causal), each a GRU plus linear projection,
/// and each adding the module input R:
///   R_F = F(R) + R,  R_S = S(R_F) + R,  R_T = T(R_S) + R.
struct TriplePathParams {
  GruParams f_fwd, f_bwd;
  LinearParams f_linear;
  GruParams s_fwd;
  LinearParams s_linear;
  GruParams t_fwd, t_bwd;
  LinearParams t_linear;
  bool t_bidirectional = false;
};

Conv2dParams load_conv(const WeightStore& w, const std::string& prefix, std::size_t sf, std::size_t df, std::size_t dt,
                       bool transposed_f);
TfcmParams load_tfcm(const WeightStore& w, const std::string& prefix, std::size_t dilation);
GatedBlockParams load_gated_block(const WeightStore& w, const std::string& prefix, Direction direction,
                                  const ModelConfig& config);
GruParams load_gru(const WeightStore& w, const std::string& prefix);
LinearParams load_linear(const WeightStore& w, const std::string& prefix);
TriplePathParams load_triple_path(const WeightStore& w, const std::string& prefix, bool causal);

// Per-frame kernels. Offline and streaming code paths both go through these,
// so matching inputs give bit-identical outputs.

/// `taps[j]` is the input frame for time tap j, or nullptr for zero padding.
void conv_frame(const Conv2dParams& p, std::span<const Frame* const> taps, std::size_t zones, std::size_t in_bins,
                Frame& out);
void depthwise_freq_frame(const DepthwiseFreqParams& p, const Frame& in, std::size_t zones, std::size_t bins, Frame& out);
void norm_act_inplace(const NormActParams& p, Frame& x);
/// out = content * sigmoid(gate), content/gate = first/second half of the rows.
void gate_frame(const Frame& in, Frame& out);
/// One GRU step for a batch of columns; `h` is updated in place.
void gru_step(const GruParams& p, const Frame& x, Frame& h);
void linear_frame(const LinearParams& p, const Frame& x, Frame& out);
/// R_F = F(R) + R for one frame.
void frequency_path_frame(const TriplePathParams& p, const Frame& r, std::size_t zones, std::size_t bins, Frame& r_f);
/// R_S for one frame (the F- and S-paths only touch the current frame).
void triple_path_fs_frame(const TriplePathParams& p, const Frame& r, std::size_t zones, std::size_t bins, Frame& r_s);

// Whole-sequence forms.

FeatureTensor conv2d_tf(const FeatureTensor& input, const Conv2dParams& params, bool causal);
FeatureTensor tfcm_forward(const FeatureTensor& input, const TfcmParams& params, bool causal);
FeatureTensor gated_block_forward(const FeatureTensor& input, const GatedBlockParams& params, bool causal);
FeatureTensor triple_path_forward(const FeatureTensor& input, const TriplePathParams& params, bool causal);

/// Fixed-capacity ring of past frames; past(1) is the most recent.
class FrameHistory {
 public:
  explicit FrameHistory(std::size_t capacity = 0) : buffer_(capacity) {}
  void push(const Frame& frame);
  const Frame* past(std::size_t k) const;
  void clear() noexcept { count_ = 0; head_ = 0; }
  std::size_t capacity() const noexcept { return buffer_.size(); }

 private:
  std::vector<Frame> buffer_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

struct TfcmState {
  FrameHistory tconv_in;
};

struct GatedBlockState {
  FrameHistory conv_in;
  std::vector<TfcmState> tfcms;
};

/// Causal per-frame forms; state carries exactly what later frames need.
void tfcm_step(const TfcmParams& p, const Frame& x, std::size_t zones, std::size_t bins, TfcmState& state, Frame& out);
GatedBlockState make_block_state(const GatedBlockParams& p);
/// Returns the output frequency size.
std::size_t gated_block_step(const GatedBlockParams& p, const Frame& x, std::size_t zones, std::size_t bins,
                             GatedBlockState& state, Frame& out);
/// `t_hidden` is the T-RNN state [hidden x zones*bins].
void triple_path_step(const TriplePathParams& p, const Frame& r, std::size_t zones, std::size_t bins,
                      Frame& t_hidden, Frame& out);

}  // namespace dualsep::nn
