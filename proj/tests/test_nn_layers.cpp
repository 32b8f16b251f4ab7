#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"

#include "dualsep/error.hpp"
#include "dualsep/nn/layers.hpp"
#include "dualsep/nn/weights.hpp"

using namespace dualsep;
using namespace dualsep::nn;
using Eigen::Index;

namespace {

ModelConfig small_config(bool causal = true) {
  ModelConfig c;
  c.causal = causal;
  c.zones = 2;
  c.bins = 17;
  c.enc_channels = {4, 6, 8};
  c.tfcm_layers = 2;
  c.tfcm_dilations = {1, 2};
  c.hidden = 8;
  c.triple_path_layers = 1;
  return c;
}

FeatureTensor random_tensor(std::size_t T, std::size_t D, std::size_t Z, std::size_t F, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  FeatureTensor x = FeatureTensor::zeros(T, D, Z, F);
  for (auto& f : x.frames) {
    for (Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  }
  return x;
}

Tensor random_param(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Tensor t;
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  t.shape = std::move(shape);
  t.data.resize(n);
  for (float& v : t.data) v = u(rng);
  return t;
}

double max_diff(const FeatureTensor& a, const FeatureTensor& b) {
  REQUIRE(a.time() == b.time());
  double m = 0.0;
  for (std::size_t t = 0; t < a.time(); ++t) {
    REQUIRE(a.frames[t].rows() == b.frames[t].rows());
    REQUIRE(a.frames[t].cols() == b.frames[t].cols());
    m = std::max(m, static_cast<double>((a.frames[t] - b.frames[t]).cwiseAbs().maxCoeff()));
  }
  return m;
}

bool frames_equal(const Frame& a, const Frame& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; }

struct ConvCase {
  std::size_t in, out, kf, kt, sf, df, dt;
  bool transposed;
};

// Direct convolution sum over a [T][C][Z][F] tensor with PyTorch weight
// layouts: [out, in, kf, kt] forward, [in, out, kf, kt] transposed. The
// transposed form scatters each input bin instead of gathering.
FeatureTensor direct_conv(const FeatureTensor& x, const Tensor& w, const Tensor& b, const ConvCase& c, bool causal) {
  const std::size_t pad = (c.kf - 1) * c.df / 2;
  const std::size_t Fi = x.bins;
  const std::size_t Fo = c.transposed ? (Fi - 1) * c.sf + (c.kf - 1) * c.df + 1 - 2 * pad
                                      : (Fi + 2 * pad - (c.kf - 1) * c.df - 1) / c.sf + 1;
  const long total = static_cast<long>((c.kt - 1) * c.dt);
  const long left = causal ? total : total / 2;
  FeatureTensor y = FeatureTensor::zeros(x.time(), c.out, x.zones, Fo);
  for (std::size_t t = 0; t < x.time(); ++t) {
    for (std::size_t z = 0; z < x.zones; ++z) {
      for (std::size_t o = 0; o < c.out; ++o) {
        for (std::size_t fo = 0; fo < Fo; ++fo) y.at(t, o, z, fo) = b.data[o];
      }
      for (std::size_t j = 0; j < c.kt; ++j) {
        const long src = static_cast<long>(t) + static_cast<long>(j * c.dt) - left;
        if (src < 0 || src >= static_cast<long>(x.time())) continue;
        const auto ts = static_cast<std::size_t>(src);
        for (std::size_t ci = 0; ci < c.in; ++ci) {
          for (std::size_t i = 0; i < c.kf; ++i) {
            for (std::size_t o = 0; o < c.out; ++o) {
              if (c.transposed) {
                const float wv = w.data[((ci * c.out + o) * c.kf + i) * c.kt + j];
                for (std::size_t fi = 0; fi < Fi; ++fi) {
                  const long fo = static_cast<long>(fi * c.sf + i * c.df) - static_cast<long>(pad);
                  if (fo >= 0 && fo < static_cast<long>(Fo)) y.at(t, o, z, static_cast<std::size_t>(fo)) += wv * x.at(ts, ci, z, fi);
                }
              } else {
                const float wv = w.data[((o * c.in + ci) * c.kf + i) * c.kt + j];
                for (std::size_t fo = 0; fo < Fo; ++fo) {
                  const long fi = static_cast<long>(fo * c.sf + i * c.df) - static_cast<long>(pad);
                  if (fi >= 0 && fi < static_cast<long>(Fi)) y.at(t, o, z, fo) += wv * x.at(ts, ci, z, static_cast<std::size_t>(fi));
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

}  // namespace

TEST_CASE("convolution matches the direct sum") {
  const ConvCase cases[] = {
      {2, 5, 3, 2, 2, 1, 1, false},  // strided encoder conv
      {3, 4, 3, 1, 1, 2, 1, false},  // frequency dilation
      {4, 3, 1, 3, 1, 1, 2, false},  // dilated time kernel
      {5, 2, 3, 2, 2, 1, 1, true},   // decoder transposed conv
      {3, 3, 3, 3, 2, 1, 1, true},
  };
  std::mt19937_64 rng(1);
  for (const auto& c : cases) {
    for (bool causal : {true, false}) {
      const auto w = random_param(c.transposed ? std::vector<std::size_t>{c.in, c.out, c.kf, c.kt}
                                               : std::vector<std::size_t>{c.out, c.in, c.kf, c.kt},
                                  rng);
      const auto b = random_param({c.out}, rng);
      const auto p = Conv2dParams::from_tensors(w, b, c.sf, c.df, c.dt, c.transposed);
      const auto x = random_tensor(7, c.in, 2, 9, rng());
      const auto y = conv2d_tf(x, p, causal);
      const auto expect = direct_conv(x, w, b, c, causal);
      CHECK(y.bins == expect.bins);
      CHECK(max_diff(y, expect) < 1e-5);
    }
  }
}

TEST_CASE("frequency sizes of strided and transposed layers") {
  Conv2dParams down;
  down.kf = 3;
  down.sf = 2;
  Conv2dParams up = down;
  up.transposed_f = true;
  std::size_t f = 257;
  const std::size_t chain[] = {129, 65, 33, 17, 9};
  for (std::size_t expect : chain) {
    f = down.out_bins(f);
    CHECK(f == expect);
  }
  for (std::size_t expect : {17u, 33u, 65u, 129u, 257u}) {
    f = up.out_bins(f);
    CHECK(f == expect);
  }
  CHECK(small_config().encoder_bins() == std::vector<std::size_t>{17, 9, 5, 3});
}

TEST_CASE("causal kt=2 impulse response spans two frames") {
  std::mt19937_64 rng(2);
  auto w = random_param({3, 2, 3, 2}, rng);
  Tensor b{{3}, {0.0f, 0.0f, 0.0f}};
  auto p = Conv2dParams::from_tensors(w, b, 1, 1, 1, false);
  auto x = FeatureTensor::zeros(6, 2, 1, 8);
  x.at(0, 1, 0, 4) = 1.0f;
  auto y = conv2d_tf(x, p, true);
  for (std::size_t t = 0; t < 6; ++t) {
    const bool nonzero = y.frames[t].cwiseAbs().maxCoeff() > 0.0f;
    CHECK(nonzero == (t <= 1));
  }
}

TEST_CASE("identity 1x1 convolution") {
  Tensor w{{3, 3, 1, 1}, {1, 0, 0, 0, 1, 0, 0, 0, 1}};
  Tensor b{{3}, {0, 0, 0}};
  auto p = Conv2dParams::from_tensors(w, b, 1, 1, 1, false);
  auto x = random_tensor(4, 3, 2, 5, 3);
  auto y = conv2d_tf(x, p, true);
  CHECK(max_diff(x, y) == 0.0);
}

TEST_CASE("depthwise frequency convolution") {
  std::mt19937_64 rng(4);
  DepthwiseFreqParams p;
  p.channels = 3;
  p.k = 3;
  p.dilation = 2;
  p.weight = Eigen::MatrixXf::Random(3, 3);
  p.bias = Eigen::VectorXf::Random(3);
  auto x = random_tensor(1, 3, 2, 7, 5);
  Frame y;
  depthwise_freq_frame(p, x.frames[0], 2, 7, y);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t z = 0; z < 2; ++z) {
      for (long f = 0; f < 7; ++f) {
        double acc = p.bias(static_cast<Index>(c));
        for (long i = 0; i < 3; ++i) {
          const long src = f + (i - 1) * 2;
          if (src >= 0 && src < 7) acc += p.weight(static_cast<Index>(c), i) * x.at(0, c, z, static_cast<std::size_t>(src));
        }
        CHECK(y(static_cast<Index>(c), static_cast<Index>(z * 7 + f)) == Catch::Approx(acc).margin(1e-5));
      }
    }
  }
}

TEST_CASE("layer norm and PReLU") {
  NormActParams p;
  p.gamma = Eigen::VectorXf::Random(5);
  p.beta = Eigen::VectorXf::Random(5);
  p.slope = Eigen::VectorXf::Constant(5, 0.25f);
  auto x = random_tensor(1, 5, 1, 6, 6).frames[0];
  Frame y = x;
  norm_act_inplace(p, y);
  for (Index n = 0; n < 6; ++n) {
    double mean = 0.0, var = 0.0;
    for (Index c = 0; c < 5; ++c) mean += x(c, n);
    mean /= 5.0;
    for (Index c = 0; c < 5; ++c) var += (x(c, n) - mean) * (x(c, n) - mean);
    var /= 5.0;
    for (Index c = 0; c < 5; ++c) {
      const double v = (x(c, n) - mean) / std::sqrt(var + 1e-5) * p.gamma(c) + p.beta(c);
      CHECK(y(c, n) == Catch::Approx(v > 0 ? v : 0.25 * v).margin(1e-5));
    }
  }
}

TEST_CASE("gating") {
  Frame in(4, 3);
  in << 1, 2, 3, -1, -2, -3, 0, 1, -1, 40, 40, 40;
  Frame out;
  gate_frame(in, out);
  REQUIRE(out.rows() == 2);
  for (Index n = 0; n < 3; ++n) {
    CHECK(out(0, n) == Catch::Approx(in(0, n) / (1.0 + std::exp(-in(2, n)))));
    CHECK(out(1, n) == in(1, n));  // saturated gate passes the content
  }
}

TEST_CASE("GRU step follows the reset-update-new equations") {
  std::mt19937_64 rng(7);
  const std::size_t I = 3, H = 4;
  GruParams p;
  p.in = I;
  p.hidden = H;
  auto rnd = [&](Index r, Index c) {
    Eigen::MatrixXf m(r, c);
    std::uniform_real_distribution<float> u(-0.6f, 0.6f);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  p.w_ih = rnd(3 * H, I);
  p.w_hh = rnd(3 * H, H);
  p.b_ih = rnd(3 * H, 1);
  p.b_hh = rnd(3 * H, 1);
  Frame x = rnd(I, 2);
  Frame h = rnd(H, 2);
  Frame h0 = h;
  gru_step(p, x, h);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (Index n = 0; n < 2; ++n) {
    for (Index k = 0; k < static_cast<Index>(H); ++k) {
      auto lin = [&](Index gate, bool hidden_part) {
        double acc = hidden_part ? p.b_hh(gate * H + k) : p.b_ih(gate * H + k);
        if (hidden_part) {
          for (Index j = 0; j < static_cast<Index>(H); ++j) acc += p.w_hh(gate * H + k, j) * h0(j, n);
        } else {
          for (Index j = 0; j < static_cast<Index>(I); ++j) acc += p.w_ih(gate * H + k, j) * x(j, n);
        }
        return acc;
      };
      const double r = sig(lin(0, false) + lin(0, true));
      const double z = sig(lin(1, false) + lin(1, true));
      const double nn = std::tanh(lin(2, false) + r * lin(2, true));
      CHECK(h(k, n) == Catch::Approx((1.0 - z) * nn + z * h0(k, n)).margin(1e-5));
    }
  }
}

TEST_CASE("zero branches make TFCM and triple path identities") {
  for (bool causal : {true, false}) {
    const auto cfg = small_config(causal);
    const auto zeros = init_zeros(cfg);
    for (std::size_t l = 0; l < 2; ++l) {
      const auto tfcm = load_tfcm(zeros, "spectral_enc.b1.tfcm" + std::to_string(l), cfg.tfcm_dilations[l]);
      auto x = random_tensor(6, 6, 2, 5, 10 + l);
      CHECK(max_diff(tfcm_forward(x, tfcm, causal), x) == 0.0);
    }
    const auto tp = load_triple_path(zeros, "tp0", causal);
    auto r = random_tensor(6, 8, 2, 3, 20);
    CHECK(max_diff(triple_path_forward(r, tp, causal), r) == 0.0);
  }
}

TEST_CASE("TFCM keeps the shape for every dilation") {
  std::mt19937_64 rng(8);
  auto cfg = small_config();
  cfg.tfcm_layers = 4;
  cfg.tfcm_dilations = {1, 2, 4, 8};
  const auto w = init_random(cfg, 3);
  for (std::size_t l = 0; l < 4; ++l) {
    const auto tfcm = load_tfcm(w, "spectral_enc.b0.tfcm" + std::to_string(l), cfg.tfcm_dilations[l]);
    auto x = random_tensor(5, 4, 2, 9, rng());
    auto y = tfcm_forward(x, tfcm, true);
    CHECK(y.time() == 5);
    CHECK(y.features() == 4);
    CHECK(y.bins == 9);
    CHECK(y.zones == 2);
  }
}

TEST_CASE("F-RNN is zone equivariant") {
  const auto cfg = small_config();
  const auto w = init_random(cfg, 5);
  const auto tp = load_triple_path(w, "tp0", true);
  const std::size_t Z = 3, F = 4;
  auto r = random_tensor(1, 8, Z, F, 30).frames[0];
  const std::size_t perm[] = {2, 0, 1};
  Frame rp(r.rows(), r.cols());
  for (std::size_t z = 0; z < Z; ++z) {
    rp.middleCols(static_cast<Index>(z * F), F) = r.middleCols(static_cast<Index>(perm[z] * F), F);
  }
  Frame a, b;
  frequency_path_frame(tp, r, Z, F, a);
  frequency_path_frame(tp, rp, Z, F, b);
  for (std::size_t z = 0; z < Z; ++z) {
    const Frame expect = a.middleCols(static_cast<Index>(perm[z] * F), F);
    const Frame got = b.middleCols(static_cast<Index>(z * F), F);
    CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-6f);
  }
  // The S-RNN runs along zones, so the full spatial path is order dependent.
  Frame sa, sb;
  triple_path_fs_frame(tp, r, Z, F, sa);
  triple_path_fs_frame(tp, rp, Z, F, sb);
  CHECK((sa.middleCols(static_cast<Index>(2 * F), F) - sb.middleCols(0, F)).cwiseAbs().maxCoeff() > 1e-4f);
}

TEST_CASE("causal layers ignore future frames") {
  const auto cfg = small_config();
  const auto w = init_random(cfg, 6);
  const auto down = load_gated_block(w, "spatial_enc.b1", Direction::down, cfg);
  const auto up = load_gated_block(w, "decoder.b0", Direction::up, cfg);
  const auto tp = load_triple_path(w, "tp0", true);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> pick(1, 9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t0 = pick(rng);
    auto check = [&](const FeatureTensor& x, auto&& fn) {
      auto xp = x;
      xp.frames[t0].array() += 3.0f;
      if (t0 + 1 < xp.time()) xp.frames[t0 + 1].setRandom();
      const auto a = fn(x);
      const auto b = fn(xp);
      for (std::size_t t = 0; t < t0; ++t) REQUIRE(frames_equal(a.frames[t], b.frames[t]));
      CHECK_FALSE(frames_equal(a.frames[t0], b.frames[t0]));
    };
    check(random_tensor(11, 4, 2, 9, rng()), [&](const FeatureTensor& x) { return gated_block_forward(x, down, true); });
    check(random_tensor(11, up.conv.in, 2, 3, rng()), [&](const FeatureTensor& x) { return gated_block_forward(x, up, true); });
    check(random_tensor(11, 8, 2, 3, rng()), [&](const FeatureTensor& x) { return triple_path_forward(x, tp, true); });
  }
}

TEST_CASE("frame history ring") {
  FrameHistory h(2);
  CHECK(h.past(1) == nullptr);
  Frame a = Frame::Constant(1, 1, 1.0f), b = Frame::Constant(1, 1, 2.0f), c = Frame::Constant(1, 1, 3.0f);
  h.push(a);
  h.push(b);
  CHECK((*h.past(1))(0, 0) == 2.0f);
  CHECK((*h.past(2))(0, 0) == 1.0f);
  h.push(c);
  CHECK((*h.past(1))(0, 0) == 3.0f);
  CHECK((*h.past(2))(0, 0) == 2.0f);
  CHECK(h.past(3) == nullptr);
  h.clear();
  CHECK(h.past(1) == nullptr);
}

TEST_CASE("per-frame steps reproduce the sequence forms") {
  const auto cfg = small_config();
  const auto w = init_random(cfg, 11);
  const std::size_t T = 12, Z = 2;

  SECTION("TFCM") {
    const auto p = load_tfcm(w, "spectral_enc.b2.tfcm1", 2);
    auto x = random_tensor(T, 8, Z, 3, 1);
    auto ref = tfcm_forward(x, p, true);
    TfcmState st{FrameHistory(p.tconv.history(true))};
    Frame out;
    for (std::size_t t = 0; t < T; ++t) {
      tfcm_step(p, x.frames[t], Z, 3, st, out);
      CHECK((out - ref.frames[t]).cwiseAbs().maxCoeff() < 1e-5f);
    }
  }
  SECTION("gated blocks") {
    for (auto [name, dir, D, F] : {std::tuple{"spectral_enc.b0", Direction::down, 2u, 17u},
                                   std::tuple{"decoder.b1", Direction::up, 0u, 5u}}) {
      const auto p = load_gated_block(w, name, dir, cfg);
      const std::size_t depth = D == 0 ? p.conv.in : D;
      auto x = random_tensor(T, depth, Z, F, 2);
      auto ref = gated_block_forward(x, p, true);
      auto st = make_block_state(p);
      Frame out;
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t bins = gated_block_step(p, x.frames[t], Z, F, st, out);
        CHECK(bins == ref.bins);
        CHECK((out - ref.frames[t]).cwiseAbs().maxCoeff() < 1e-5f);
      }
    }
  }
  SECTION("triple path") {
    const auto p = load_triple_path(w, "tp0", true);
    auto x = random_tensor(T, 8, Z, 3, 3);
    auto ref = triple_path_forward(x, p, true);
    Frame h = Frame::Zero(8, static_cast<Index>(Z * 3)), out;
    for (std::size_t t = 0; t < T; ++t) {
      triple_path_step(p, x.frames[t], Z, 3, h, out);
      CHECK((out - ref.frames[t]).cwiseAbs().maxCoeff() < 1e-5f);
    }
  }
}

TEST_CASE("non-causal triple path needs its backward T-RNN") {
  const auto w = init_random(small_config(true), 1);
  const auto tp = load_triple_path(w, "tp0", true);
  auto x = random_tensor(3, 8, 2, 3, 4);
  CHECK_THROWS_AS(triple_path_forward(x, tp, false), ContractError);
}
