#include "dualsep/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "dualsep/error.hpp"

namespace dualsep::nn {
namespace {

using Index = Eigen::Index;

Eigen::VectorXf vec(const Tensor& t) { return Eigen::Map<const Eigen::VectorXf>(t.data.data(), static_cast<Index>(t.size())); }

NormActParams load_norm(const WeightStore& w, const std::string& prefix) {
  return {vec(w.get(prefix + ".ln.gamma")), vec(w.get(prefix + ".ln.beta")), vec(w.get(prefix + ".prelu"))};
}

// gi already holds W_ih x + b_ih.
void gru_cell(const GruParams& p, const Frame& gi, Frame& h) {
  const Index H = static_cast<Index>(p.hidden);
  Frame gh = p.w_hh * h;
  gh.colwise() += p.b_hh;
  const Eigen::ArrayXXf r = (1.0f + (-(gi.topRows(H) + gh.topRows(H)).array()).exp()).inverse();
  const Eigen::ArrayXXf z = (1.0f + (-(gi.middleRows(H, H) + gh.middleRows(H, H)).array()).exp()).inverse();
  const Eigen::ArrayXXf n = (gi.bottomRows(H).array() + r * gh.bottomRows(H).array()).tanh();
  h = ((1.0f - z) * n + z * h.array()).matrix();
}

Frame input_gates(const GruParams& p, const Frame& x) {
  Frame gi = p.w_ih * x;
  gi.colwise() += p.b_ih;
  return gi;
}

std::vector<const Frame*> sequence_taps(const Conv2dParams& p, const FeatureTensor& x, std::size_t t, bool causal) {
  std::vector<const Frame*> taps(p.kt, nullptr);
  for (std::size_t j = 0; j < p.kt; ++j) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + p.tap_offset(j, causal);
    if (src >= 0 && src < static_cast<std::ptrdiff_t>(x.time())) taps[j] = &x.frames[static_cast<std::size_t>(src)];
  }
  return taps;
}

std::vector<const Frame*> stream_taps(const Conv2dParams& p, const Frame& current, const FrameHistory& history) {
  std::vector<const Frame*> taps(p.kt, nullptr);
  for (std::size_t j = 0; j < p.kt; ++j) {
    const std::ptrdiff_t off = p.tap_offset(j, true);
    taps[j] = off == 0 ? &current : history.past(static_cast<std::size_t>(-off));
  }
  return taps;
}

}  // namespace

FeatureTensor FeatureTensor::zeros(std::size_t time, std::size_t features, std::size_t zones, std::size_t bins) {
  FeatureTensor t;
  t.zones = zones;
  t.bins = bins;
  t.frames.assign(time, Frame::Zero(static_cast<Index>(features), static_cast<Index>(zones * bins)));
  return t;
}

std::size_t Conv2dParams::out_bins(std::size_t in_bins) const {
  const std::size_t pad = (kf - 1) * df / 2;
  if (transposed_f) return (in_bins - 1) * sf + (kf - 1) * df + 1 - 2 * pad;
  return (in_bins + 2 * pad - (kf - 1) * df - 1) / sf + 1;
}

std::ptrdiff_t Conv2dParams::tap_offset(std::size_t j, bool causal) const {
  const auto total = static_cast<std::ptrdiff_t>((kt - 1) * dt);
  const auto left = causal ? total : total / 2;
  return static_cast<std::ptrdiff_t>(j * dt) - left;
}

std::size_t Conv2dParams::history(bool causal) const { return causal ? (kt - 1) * dt : (kt - 1) * dt / 2; }

Conv2dParams Conv2dParams::from_tensors(const Tensor& weight, const Tensor& bias, std::size_t sf, std::size_t df,
                                        std::size_t dt, bool transposed_f) {
  if (weight.shape.size() != 4) throw ContractError("convolution weights must be 4-D");
  Conv2dParams p;
  p.transposed_f = transposed_f;
  p.in = transposed_f ? weight.shape[0] : weight.shape[1];
  p.out = transposed_f ? weight.shape[1] : weight.shape[0];
  p.kf = weight.shape[2];
  p.kt = weight.shape[3];
  p.sf = sf;
  p.df = df;
  p.dt = dt;
  if (bias.size() != p.out) throw ContractError("convolution bias does not match its output channels");
  const std::size_t K = p.in * p.kt * p.kf;
  p.weight.resize(static_cast<Index>(p.out), static_cast<Index>(K));
  for (std::size_t o = 0; o < p.out; ++o) {
    for (std::size_t c = 0; c < p.in; ++c) {
      for (std::size_t i = 0; i < p.kf; ++i) {
        for (std::size_t j = 0; j < p.kt; ++j) {
          const std::size_t src =
              transposed_f ? ((c * p.out + o) * p.kf + i) * p.kt + j : ((o * p.in + c) * p.kf + i) * p.kt + j;
          p.weight(static_cast<Index>(o), static_cast<Index>((c * p.kt + j) * p.kf + i)) = weight.data[src];
        }
      }
    }
  }
  p.bias = vec(bias);
  return p;
}

Conv2dParams load_conv(const WeightStore& w, const std::string& prefix, std::size_t sf, std::size_t df, std::size_t dt,
                       bool transposed_f) {
  return Conv2dParams::from_tensors(w.get(prefix + ".weight"), w.get(prefix + ".bias"), sf, df, dt, transposed_f);
}

TfcmParams load_tfcm(const WeightStore& w, const std::string& prefix, std::size_t dilation) {
  TfcmParams p;
  p.dilation = dilation;
  p.pw = load_conv(w, prefix + ".pw", 1, 1, 1, false);
  p.pw_norm = load_norm(w, prefix + ".pw");
  const Tensor& fw = w.get(prefix + ".fconv.weight");
  p.fconv.channels = fw.shape[0];
  p.fconv.k = fw.shape[2];
  p.fconv.dilation = dilation;
  p.fconv.weight = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      fw.data.data(), static_cast<Index>(p.fconv.channels), static_cast<Index>(p.fconv.k));
  p.fconv.bias = vec(w.get(prefix + ".fconv.bias"));
  p.fconv_norm = load_norm(w, prefix + ".fconv");
  p.tconv = load_conv(w, prefix + ".tconv", 1, 1, dilation, false);
  p.tconv_norm = load_norm(w, prefix + ".tconv");
  return p;
}

GatedBlockParams load_gated_block(const WeightStore& w, const std::string& prefix, Direction direction,
                                  const ModelConfig& config) {
  GatedBlockParams p;
  p.direction = direction;
  p.conv = direction == Direction::down ? load_conv(w, prefix + ".gconv", config.stride_f, 1, 1, false)
                                        : load_conv(w, prefix + ".gdeconv", config.stride_f, 1, 1, true);
  for (std::size_t l = 0; l < config.tfcm_layers; ++l) {
    p.tfcms.push_back(load_tfcm(w, prefix + ".tfcm" + std::to_string(l), config.tfcm_dilations[l]));
  }
  return p;
}

GruParams load_gru(const WeightStore& w, const std::string& prefix) {
  GruParams p;
  const Tensor& ih = w.get(prefix + ".w_ih");
  const Tensor& hh = w.get(prefix + ".w_hh");
  p.hidden = hh.shape[1];
  p.in = ih.shape[1];
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  p.w_ih = Eigen::Map<const RowMajor>(ih.data.data(), static_cast<Index>(ih.shape[0]), static_cast<Index>(ih.shape[1]));
  p.w_hh = Eigen::Map<const RowMajor>(hh.data.data(), static_cast<Index>(hh.shape[0]), static_cast<Index>(hh.shape[1]));
  p.b_ih = vec(w.get(prefix + ".b_ih"));
  p.b_hh = vec(w.get(prefix + ".b_hh"));
  return p;
}

LinearParams load_linear(const WeightStore& w, const std::string& prefix) {
  const Tensor& t = w.get(prefix + ".weight");
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return {Eigen::Map<const RowMajor>(t.data.data(), static_cast<Index>(t.shape[0]), static_cast<Index>(t.shape[1])),
          vec(w.get(prefix + ".bias"))};
}

TriplePathParams load_triple_path(const WeightStore& w, const std::string& prefix, bool causal) {
  TriplePathParams p;
  p.f_fwd = load_gru(w, prefix + ".frnn.fwd");
  p.f_bwd = load_gru(w, prefix + ".frnn.bwd");
  p.f_linear = load_linear(w, prefix + ".frnn.linear");
  p.s_fwd = load_gru(w, prefix + ".srnn.fwd");
  p.s_linear = load_linear(w, prefix + ".srnn.linear");
  p.t_fwd = load_gru(w, prefix + ".trnn.fwd");
  p.t_bidirectional = !causal;
  if (!causal) p.t_bwd = load_gru(w, prefix + ".trnn.bwd");
  p.t_linear = load_linear(w, prefix + ".trnn.linear");
  return p;
}

void conv_frame(const Conv2dParams& p, std::span<const Frame* const> taps, std::size_t zones, std::size_t in_bins,
                Frame& out) {
  if (taps.size() != p.kt) throw ContractError("convolution expects one input per time tap");
  const std::size_t fo_n = p.out_bins(in_bins);
  const auto N = static_cast<Index>(zones * fo_n);

  if (p.kf == 1 && p.kt == 1 && p.sf == 1 && !p.transposed_f) {
    if (taps[0] == nullptr) {
      out = p.bias.replicate(1, N);
    } else {
      out.noalias() = p.weight * (*taps[0]);
      out.colwise() += p.bias;
    }
    return;
  }

  const std::size_t K = p.in * p.kt * p.kf;
  const auto pad = static_cast<std::ptrdiff_t>((p.kf - 1) * p.df / 2);
  const auto sf = static_cast<std::ptrdiff_t>(p.sf);
  const auto nb = static_cast<std::ptrdiff_t>(in_bins);
  thread_local Frame cols;
  cols.resize(static_cast<Index>(K), N);
  // Source bin of output bin fo for frequency tap i, or -1 when it reads padding.
  std::vector<std::ptrdiff_t> src(fo_n);
  for (std::size_t i = 0; i < p.kf; ++i) {
    const auto shift = static_cast<std::ptrdiff_t>(i * p.df);
    for (std::size_t fo = 0; fo < fo_n; ++fo) {
      std::ptrdiff_t fi;
      if (p.transposed_f) {
        const std::ptrdiff_t num = static_cast<std::ptrdiff_t>(fo) + pad - shift;
        fi = (num >= 0 && num % sf == 0) ? num / sf : -1;
      } else {
        fi = static_cast<std::ptrdiff_t>(fo) * sf + shift - pad;
      }
      src[fo] = (fi >= 0 && fi < nb) ? fi : -1;
    }
    for (std::size_t j = 0; j < p.kt; ++j) {
      const Frame* x = taps[j];
      for (std::size_t c = 0; c < p.in; ++c) {
        float* dst = cols.row(static_cast<Index>((c * p.kt + j) * p.kf + i)).data();
        if (x == nullptr) {
          std::fill(dst, dst + N, 0.0f);
          continue;
        }
        const float* row = x->row(static_cast<Index>(c)).data();
        for (std::size_t z = 0; z < zones; ++z) {
          const float* in = row + z * in_bins;
          float* o = dst + z * fo_n;
          for (std::size_t fo = 0; fo < fo_n; ++fo) o[fo] = src[fo] >= 0 ? in[src[fo]] : 0.0f;
        }
      }
    }
  }
  out.noalias() = p.weight * cols;
  out.colwise() += p.bias;
}

void depthwise_freq_frame(const DepthwiseFreqParams& p, const Frame& in, std::size_t zones, std::size_t bins, Frame& out) {
  const auto C = static_cast<Index>(p.channels);
  out.resize(C, in.cols());
  const auto half = static_cast<std::ptrdiff_t>((p.k - 1) / 2 * p.dilation);
  const auto nb = static_cast<std::ptrdiff_t>(bins);
  for (Index c = 0; c < C; ++c) {
    const float* x = in.row(c).data();
    float* y = out.row(c).data();
    std::fill(y, y + in.cols(), p.bias(c));
    for (std::size_t i = 0; i < p.k; ++i) {
      const float w = p.weight(c, static_cast<Index>(i));
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(i * p.dilation) - half;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(nb, nb - shift);
      for (std::size_t z = 0; z < zones; ++z) {
        const float* xz = x + z * bins;
        float* yz = y + z * bins;
        for (std::ptrdiff_t f = lo; f < hi; ++f) yz[f] += w * xz[f + shift];
      }
    }
  }
}

void norm_act_inplace(const NormActParams& p, Frame& x) {
  const Index C = x.rows();
  const Index N = x.cols();
  const float inv_c = 1.0f / static_cast<float>(C);
  thread_local Eigen::ArrayXf mean_buf, scale_buf;
  mean_buf.setZero(N);
  scale_buf.setZero(N);
  float* __restrict mean = mean_buf.data();
  float* __restrict scale = scale_buf.data();
  for (Index c = 0; c < C; ++c) {
    const float* __restrict v = x.row(c).data();
    for (Index n = 0; n < N; ++n) mean[n] += v[n];
  }
  mean_buf *= inv_c;
  for (Index c = 0; c < C; ++c) {
    const float* __restrict v = x.row(c).data();
    for (Index n = 0; n < N; ++n) {
      const float d = v[n] - mean[n];
      scale[n] += d * d;
    }
  }
  scale_buf = (scale_buf * inv_c + NormActParams::kEps).sqrt().inverse();
  for (Index c = 0; c < C; ++c) {
    float* __restrict v = x.row(c).data();
    const float g = p.gamma(c), b = p.beta(c), a = p.slope(c);
    for (Index n = 0; n < N; ++n) {
      const float y = (v[n] - mean[n]) * scale[n] * g + b;
      v[n] = std::max(y, 0.0f) + a * std::min(y, 0.0f);
    }
  }
}

void gate_frame(const Frame& in, Frame& out) {
  const Index C = in.rows() / 2;
  out = (in.topRows(C).array() * (1.0f + (-in.bottomRows(C).array()).exp()).inverse()).matrix();
}

void gru_step(const GruParams& p, const Frame& x, Frame& h) { gru_cell(p, input_gates(p, x), h); }

void linear_frame(const LinearParams& p, const Frame& x, Frame& out) {
  out.noalias() = p.weight * x;
  out.colwise() += p.bias;
}

void frequency_path_frame(const TriplePathParams& p, const Frame& r, std::size_t zones, std::size_t bins, Frame& r_f) {
  const auto H = static_cast<Index>(p.f_fwd.hidden);
  const auto Z = static_cast<Index>(zones);
  const auto F = static_cast<Index>(bins);

  // Sequences along frequency, one per zone.
  Frame hf(2 * H, Z * F);
  for (int dir = 0; dir < 2; ++dir) {
    const GruParams& g = dir == 0 ? p.f_fwd : p.f_bwd;
    const Frame gi_all = input_gates(g, r);
    Frame h = Frame::Zero(H, Z);
    Frame gi(3 * H, Z);
    for (Index s = 0; s < F; ++s) {
      const Index f = dir == 0 ? s : F - 1 - s;
      for (Index z = 0; z < Z; ++z) gi.col(z) = gi_all.col(z * F + f);
      gru_cell(g, gi, h);
      for (Index z = 0; z < Z; ++z) hf.block(dir * H, z * F + f, H, 1) = h.col(z);
    }
  }
  linear_frame(p.f_linear, hf, r_f);
  r_f += r;
}

void triple_path_fs_frame(const TriplePathParams& p, const Frame& r, std::size_t zones, std::size_t bins, Frame& r_s) {
  const auto H = static_cast<Index>(p.s_fwd.hidden);
  const auto Z = static_cast<Index>(zones);
  const auto F = static_cast<Index>(bins);
  Frame r_f;
  frequency_path_frame(p, r, zones, bins, r_f);

  // S-RNN: sequences along zones, one per frequency.
  const Frame gi_all = input_gates(p.s_fwd, r_f);
  Frame hs(H, Z * F);
  Frame h = Frame::Zero(H, F);
  Frame gi;
  for (Index z = 0; z < Z; ++z) {
    gi = gi_all.middleCols(z * F, F);
    gru_cell(p.s_fwd, gi, h);
    hs.middleCols(z * F, F) = h;
  }
  linear_frame(p.s_linear, hs, r_s);
  r_s += r;
}

FeatureTensor conv2d_tf(const FeatureTensor& input, const Conv2dParams& params, bool causal) {
  FeatureTensor out;
  out.zones = input.zones;
  out.bins = params.out_bins(input.bins);
  out.frames.resize(input.time());
  for (std::size_t t = 0; t < input.time(); ++t) {
    const auto taps = sequence_taps(params, input, t, causal);
    conv_frame(params, taps, input.zones, input.bins, out.frames[t]);
  }
  return out;
}

FeatureTensor tfcm_forward(const FeatureTensor& input, const TfcmParams& params, bool causal) {
  FeatureTensor mid;
  mid.zones = input.zones;
  mid.bins = input.bins;
  mid.frames.resize(input.time());
  Frame a;
  for (std::size_t t = 0; t < input.time(); ++t) {
    const Frame* x = &input.frames[t];
    conv_frame(params.pw, std::span<const Frame* const>(&x, 1), input.zones, input.bins, a);
    norm_act_inplace(params.pw_norm, a);
    depthwise_freq_frame(params.fconv, a, input.zones, input.bins, mid.frames[t]);
    norm_act_inplace(params.fconv_norm, mid.frames[t]);
  }
  FeatureTensor out = conv2d_tf(mid, params.tconv, causal);
  for (std::size_t t = 0; t < input.time(); ++t) {
    norm_act_inplace(params.tconv_norm, out.frames[t]);
    out.frames[t] += input.frames[t];
  }
  return out;
}

FeatureTensor gated_block_forward(const FeatureTensor& input, const GatedBlockParams& params, bool causal) {
  auto gated = [&](const FeatureTensor& x) {
    FeatureTensor y = conv2d_tf(x, params.conv, causal);
    Frame g;
    for (auto& f : y.frames) {
      gate_frame(f, g);
      f.swap(g);
    }
    return y;
  };
  if (params.direction == Direction::down) {
    FeatureTensor x = gated(input);
    for (const auto& tfcm : params.tfcms) x = tfcm_forward(x, tfcm, causal);
    return x;
  }
  FeatureTensor x = input;
  for (const auto& tfcm : params.tfcms) x = tfcm_forward(x, tfcm, causal);
  return gated(x);
}

FeatureTensor triple_path_forward(const FeatureTensor& input, const TriplePathParams& params, bool causal) {
  if (!causal && !params.t_bidirectional) throw ContractError("non-causal triple path needs a backward T-RNN");
  const std::size_t T = input.time();
  const auto H = static_cast<Index>(params.t_fwd.hidden);
  const auto N = static_cast<Index>(input.zones * input.bins);
  std::vector<Frame> rs(T);
  for (std::size_t t = 0; t < T; ++t) triple_path_fs_frame(params, input.frames[t], input.zones, input.bins, rs[t]);

  FeatureTensor out;
  out.zones = input.zones;
  out.bins = input.bins;
  out.frames.resize(T);
  if (causal) {
    Frame h = Frame::Zero(H, N);
    for (std::size_t t = 0; t < T; ++t) {
      gru_step(params.t_fwd, rs[t], h);
      linear_frame(params.t_linear, h, out.frames[t]);
      out.frames[t] += input.frames[t];
    }
    return out;
  }
  std::vector<Frame> hf(T), hb(T);
  Frame h = Frame::Zero(H, N);
  for (std::size_t t = 0; t < T; ++t) {
    gru_step(params.t_fwd, rs[t], h);
    hf[t] = h;
  }
  h.setZero();
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = T - 1 - s;
    gru_step(params.t_bwd, rs[t], h);
    hb[t] = h;
  }
  Frame cat(2 * H, N);
  for (std::size_t t = 0; t < T; ++t) {
    cat.topRows(H) = hf[t];
    cat.bottomRows(H) = hb[t];
    linear_frame(params.t_linear, cat, out.frames[t]);
    out.frames[t] += input.frames[t];
  }
  return out;
}

void FrameHistory::push(const Frame& frame) {
  if (buffer_.empty()) return;
  buffer_[head_] = frame;
  head_ = (head_ + 1) % buffer_.size();
  count_ = std::min(count_ + 1, buffer_.size());
}

const Frame* FrameHistory::past(std::size_t k) const {
  if (k == 0 || k > count_) return nullptr;
  return &buffer_[(head_ + buffer_.size() - k) % buffer_.size()];
}

void tfcm_step(const TfcmParams& p, const Frame& x, std::size_t zones, std::size_t bins, TfcmState& state, Frame& out) {
  Frame a, b;
  const Frame* xp = &x;
  conv_frame(p.pw, std::span<const Frame* const>(&xp, 1), zones, bins, a);
  norm_act_inplace(p.pw_norm, a);
  depthwise_freq_frame(p.fconv, a, zones, bins, b);
  norm_act_inplace(p.fconv_norm, b);
  const auto taps = stream_taps(p.tconv, b, state.tconv_in);
  conv_frame(p.tconv, taps, zones, bins, out);
  norm_act_inplace(p.tconv_norm, out);
  out += x;
  state.tconv_in.push(b);
}

GatedBlockState make_block_state(const GatedBlockParams& p) {
  GatedBlockState s;
  s.conv_in = FrameHistory(p.conv.history(true));
  for (const auto& t : p.tfcms) s.tfcms.push_back({FrameHistory(t.tconv.history(true))});
  return s;
}

std::size_t gated_block_step(const GatedBlockParams& p, const Frame& x, std::size_t zones, std::size_t bins,
                             GatedBlockState& state, Frame& out) {
  Frame y, g;
  auto gated = [&](const Frame& in, Frame& result) {
    const auto taps = stream_taps(p.conv, in, state.conv_in);
    conv_frame(p.conv, taps, zones, bins, g);
    gate_frame(g, result);
    state.conv_in.push(in);
  };
  if (p.direction == Direction::down) {
    gated(x, y);
    const std::size_t ob = p.conv.out_bins(bins);
    for (std::size_t l = 0; l < p.tfcms.size(); ++l) {
      tfcm_step(p.tfcms[l], y, zones, ob, state.tfcms[l], out);
      y.swap(out);
    }
    out.swap(y);
    return ob;
  }
  y = x;
  for (std::size_t l = 0; l < p.tfcms.size(); ++l) {
    tfcm_step(p.tfcms[l], y, zones, bins, state.tfcms[l], out);
    y.swap(out);
  }
  gated(y, out);
  return p.conv.out_bins(bins);
}

void triple_path_step(const TriplePathParams& p, const Frame& r, std::size_t zones, std::size_t bins,
                      Frame& t_hidden, Frame& out) {
  if (p.t_bidirectional) throw ContractError("a bidirectional T-RNN cannot run frame by frame");
  Frame rs;
  triple_path_fs_frame(p, r, zones, bins, rs);
  gru_step(p.t_fwd, rs, t_hidden);
  linear_frame(p.t_linear, t_hidden, out);
  out += r;
}

}  // namespace dualsep::nn
