#include <chrono>
#include <thread>

#include "catch_amalgamated.hpp"

#include "dualsep/error.hpp"
#include "dualsep/pipeline.hpp"
#include "test_support.hpp"

using namespace dualsep;

namespace {

// Two zones, 32-point STFT and a small network keep every mode fast.
PipelineConfig small_config(PipelineMode mode) {
  PipelineConfig c;
  c.layout = {2, 4};
  c.stft.fft_size = 32;
  c.stft.win_length = 32;
  c.stft.hop = 16;
  c.model.zones = 2;
  c.model.bins = 17;
  c.model.enc_channels = {4, 6, 8};
  c.model.tfcm_layers = 2;
  c.model.tfcm_dilations = {1, 2};
  c.model.hidden = 8;
  c.model.triple_path_layers = 1;
  c.iva.max_iter = 20;
  c.online_iva.block_frames = 8;
  c.mode = mode;
  return c;
}

MultichannelSignal raw_mix(const PipelineConfig& c, std::size_t length, std::uint64_t seed) {
  return testing::random_signal(c.layout.raw_channels(), length, seed, 0.3).as_raw_mics(c.layout);
}

double max_diff(const std::vector<MultichannelSignal>& a, const std::vector<MultichannelSignal>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t z = 0; z < a.size(); ++z) {
    REQUIRE(a[z].length() == b[z].length());
    m = std::max(m, testing::max_abs_diff(a[z].samples(), b[z].samples()));
  }
  return m;
}

}  // namespace

TEST_CASE("bf-only output is the time-domain beamformer") {
  auto cfg = small_config(PipelineMode::bf_only);
  cfg.steering = {SteeringSpec{{0.0, 1.0 / 16000.0, 2.0 / 16000.0, 3.0 / 16000.0}, GainNorm::inverse_p}};
  const auto mix = raw_mix(cfg, 3000, 1);
  const auto out = separate_offline(mix, cfg, nullptr);
  const auto bf = delay_and_sum(mix, cfg.steering);
  REQUIRE(out.size() == 2);
  for (std::size_t z = 0; z < 2; ++z) {
    REQUIRE(out[z].length() == 3000);
    CHECK(testing::max_abs_diff(out[z].samples(), bf.channel(z)) < 1e-5);
  }
}

TEST_CASE("every mode returns one full-length signal per zone") {
  const auto mix = raw_mix(small_config(PipelineMode::offline), 2500, 2);
  for (auto mode : {PipelineMode::offline, PipelineMode::dsp_only, PipelineMode::bf_only}) {
    auto cfg = small_config(mode);
    const nn::Model model(cfg.model, nn::init_random(cfg.model, 1));
    StageTimes times;
    const auto out = separate_offline(mix, cfg, &model, &times);
    REQUIRE(out.size() == 2);
    for (const auto& z : out) {
      CHECK(z.channels() == 1);
      CHECK(z.length() == 2500);
    }
    CHECK(times.total() > 0.0);
    CHECK((times.nn > 0.0) == (mode == PipelineMode::offline));
  }
}

TEST_CASE("a unit mask reproduces the beamformer") {
  auto cfg = small_config(PipelineMode::offline);
  auto w = nn::init_random(cfg.model, 3);
  nn::rig_unit_mask(w, cfg.model);
  const nn::Model model(cfg.model, w);
  const auto mix = raw_mix(cfg, 2000, 3);
  auto bf_cfg = small_config(PipelineMode::bf_only);
  CHECK(max_diff(separate_offline(mix, cfg, &model), separate_offline(mix, bf_cfg, nullptr)) < 1e-5);
}

TEST_CASE("DSP-only output does not depend on the weights") {
  auto cfg = small_config(PipelineMode::dsp_only);
  const nn::Model a(cfg.model, nn::init_random(cfg.model, 1));
  const nn::Model b(cfg.model, nn::init_random(cfg.model, 2));
  const auto mix = raw_mix(cfg, 2000, 4);
  CHECK(max_diff(separate_offline(mix, cfg, &a), separate_offline(mix, cfg, &b)) == 0.0);
  CHECK(max_diff(separate_offline(mix, cfg, &a), separate_offline(mix, cfg, nullptr)) == 0.0);
}

TEST_CASE("streaming matches the offline causal chain with block IVA") {
  auto off = small_config(PipelineMode::offline);
  off.iva_mode = IvaMode::block_online;
  auto st = off;
  st.mode = PipelineMode::streaming;
  const nn::Model model(off.model, nn::init_random(off.model, 5));
  for (std::size_t len : {16u * 64u, 16u * 64u + 5u, 16u * 37u}) {
    const auto mix = raw_mix(off, len, len);
    const auto a = separate_offline(mix, off, &model);
    const auto b = separate_offline(mix, st, &model);
    CHECK(max_diff(a, b) < 1e-4);
  }
}

TEST_CASE("stream pushes return finished samples in order") {
  auto cfg = small_config(PipelineMode::streaming);
  cfg.iva_mode = IvaMode::block_online;
  auto model = std::make_shared<const nn::Model>(cfg.model, nn::init_random(cfg.model, 6));
  const auto mix = raw_mix(cfg, 16 * 40, 6);
  SeparationStream stream(cfg, model);
  std::size_t emitted = 0;
  for (std::size_t b = 0; b < 40; ++b) {
    const auto part = stream.push(mix.slice(b * 16, 16).as_raw_mics(cfg.layout));
    CHECK(part.channels() == 2);
    // Nothing leaves before the first IVA block has filled.
    if (b < cfg.online_iva.block_frames - 1) CHECK(part.length() == 0);
    emitted += part.length();
  }
  CHECK(stream.samples_pushed() == 16 * 40);
  emitted += stream.flush().length();
  CHECK(emitted >= 16 * 40);
  CHECK_THROWS_AS(stream.push(mix.slice(0, 16).as_raw_mics(cfg.layout)), ContractError);
  CHECK(stream.latency_seconds() == Catch::Approx((32.0 + 8 * 16) / 16000.0));
}

TEST_CASE("silence in gives silence out") {
  for (auto mode : {PipelineMode::offline, PipelineMode::dsp_only, PipelineMode::streaming}) {
    auto cfg = small_config(mode);
    cfg.iva_mode = IvaMode::block_online;
    const nn::Model model(cfg.model, nn::init_random(cfg.model, 7));
    const auto mix = MultichannelSignal::raw_mics(cfg.layout, 1600);
    for (const auto& z : separate_offline(mix, cfg, &model)) CHECK(rms(z, 0) < 1e-3);
  }
}

TEST_CASE("configuration errors") {
  auto cfg = small_config(PipelineMode::streaming);
  CHECK_THROWS_AS(cfg.validate(), ValidationError);  // batch IVA cannot stream
  cfg.iva_mode = IvaMode::block_online;
  CHECK_NOTHROW(cfg.validate());
  auto nc = cfg;
  nc.model.causal = false;
  CHECK_THROWS_AS(nc.validate(), ValidationError);
  auto frac = cfg;
  frac.steering = {SteeringSpec{{0.0, 0.5 / 16000.0, 0.0, 0.0}, GainNorm::inverse_p}};
  CHECK_THROWS_AS(frac.validate(), ValidationError);
  auto zones = small_config(PipelineMode::offline);
  zones.model.zones = 3;
  CHECK_THROWS_AS(zones.validate(), ValidationError);
  auto steer = small_config(PipelineMode::bf_only);
  steer.steering = {SteeringSpec::broadside(3)};
  CHECK_THROWS_AS(steer.validate(), ValidationError);

  const auto off = small_config(PipelineMode::offline);
  CHECK_THROWS_AS(separate_offline(raw_mix(off, 100, 1), off, nullptr), LoadError);
  CHECK_THROWS_AS(load_model(off), LoadError);
  CHECK(load_model(small_config(PipelineMode::dsp_only)) == nullptr);
  CHECK_THROWS_AS(separate_offline(MultichannelSignal(3, 100), small_config(PipelineMode::bf_only), nullptr), ContractError);
}

TEST_CASE("model loaded from a weight file") {
  auto cfg = small_config(PipelineMode::offline);
  const auto dir = testing::scratch_dir("pipeline_weights");
  const auto w = nn::init_random(cfg.model, 8);
  nn::save_weights(w, dir / "w.bin");
  cfg.weights_path = dir / "w.bin";
  const auto mix = raw_mix(cfg, 1500, 8);
  const nn::Model model(cfg.model, w);
  CHECK(max_diff(separate_offline(mix, cfg), separate_offline(mix, cfg, &model)) == 0.0);
}

TEST_CASE("RTF of a stub stage") {
  const auto report = measure_rtf(
      [](StageTimes& t) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        t.nn = 0.1;
      },
      0.2, 5);
  CHECK(report.rtf.size() == 5);
  CHECK(report.median == Catch::Approx(0.5).margin(0.05));
  CHECK(report.p95 >= report.median);
  CHECK(report.stage_seconds.nn == Catch::Approx(0.1));
  CHECK_THROWS_AS(measure_rtf([](StageTimes&) {}, 0.0, 1), ValidationError);
}
