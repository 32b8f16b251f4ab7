#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "catch_amalgamated.hpp"

#include "dualsep/cabin_sim.hpp"
#include "dualsep/dataset.hpp"
#include "dualsep/error.hpp"
#include "dualsep/fractional_delay.hpp"
#include "dualsep/wav.hpp"
#include "test_support.hpp"

using namespace dualsep;

namespace {

std::size_t argmax_abs(std::span<const float> h) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (std::abs(h[i]) > std::abs(h[best])) best = i;
  }
  return best;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("default cabin geometry") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.5);
  CHECK(scene.zone_count() == 6);
  CHECK(scene.layout() == (ChannelLayout{6, 4}));
  for (const auto& array : scene.arrays) {
    REQUIRE(array.size() == 4);
    CHECK(distance(array[0], array[1]) == Catch::Approx(0.02));
    for (const auto& m : array) CHECK(scene.inside(m));
  }
  place_sources(scene, {0, 3, 5});
  CHECK(scene.sources.size() == 3);
  CHECK_THROWS_AS(place_sources(scene, {0, 0}), ValidationError);
  CHECK_THROWS_AS(place_sources(scene, {9}), ValidationError);
}

TEST_CASE("free-field direct path follows the Green's function") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.5);
  place_sources(scene, {4});
  const Vec3 src = scene.sources[0];
  scene.arrays[4][0] = {src.x, src.y - 1.0, src.z};
  RirOptions opt;
  opt.max_order = 0;
  opt.highpass_hz = 0.0;
  auto rirs = generate_rirs(scene, opt);
  REQUIRE(rirs.all_finite());
  const auto h = rirs.rir(0, scene.layout().raw_index(4, 0));

  const double delay = 16000.0 / 343.0;  // 46.65 samples for 1 m
  double sum = 0.0, moment = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) {
    sum += h[n];
    moment += static_cast<double>(n) * h[n];
  }
  CHECK(sum == Catch::Approx(1.0 / (4.0 * std::numbers::pi)).epsilon(0.02));
  CHECK(moment / sum == Catch::Approx(delay).margin(0.1));
  const std::size_t peak = argmax_abs(h);
  CHECK((peak == 46 || peak == 47));
  // Nothing arrives before the sinc support.
  for (std::size_t n = 0; n < 46 - kSincTaps / 2; ++n) CHECK(h[n] == 0.0f);
}

TEST_CASE("direct-path arrivals match geometry within half a sample") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.5);
  place_sources(scene, {0, 1, 2, 3, 4, 5});
  RirOptions opt;
  opt.max_order = 0;
  opt.highpass_hz = 0.0;
  auto rirs = generate_rirs(scene, opt);
  std::size_t mic = 0;
  for (const auto& array : scene.arrays) {
    for (const auto& m : array) {
      for (std::size_t s = 0; s < 6; ++s) {
        const double expect = distance(scene.sources[s], m) / 343.0 * 16000.0;
        CHECK(std::abs(static_cast<double>(argmax_abs(rirs.rir(s, mic))) - expect) <= 0.5 + 1e-9);
      }
      ++mic;
    }
  }
  // Broadside pair 2 cm apart: arrival difference below one sample.
  const double d0 = distance(scene.sources[0], scene.arrays[0][1]);
  const double d1 = distance(scene.sources[0], scene.arrays[0][2]);
  CHECK(std::abs(d0 - d1) / 343.0 * 16000.0 < 0.02 / 343.0 * 16000.0);
}

TEST_CASE("Eyring reflection coefficient") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.5);
  const double beta = eyring_reflection(scene);
  // Eyring: T60 = 0.1611 V / (-S ln(1 - alpha)), alpha = 1 - beta^2.
  const double alpha = 1.0 - beta * beta;
  const double t60 = 24.0 * std::log(10.0) / 343.0 * scene.volume() / (-scene.surface() * std::log(1.0 - alpha));
  CHECK(t60 == Catch::Approx(0.5).epsilon(1e-9));
  CHECK(0.1611 * scene.volume() / (-scene.surface() * std::log(1.0 - alpha)) == Catch::Approx(0.5).epsilon(1e-3));
  CHECK(beta > 0.0);
  CHECK(beta < 1.0);
  scene.rt60 = 0.0;
  CHECK_THROWS_AS(eyring_reflection(scene), ValidationError);
}

TEST_CASE("Schroeder decay estimate is near the target RT60") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.5);
  place_sources(scene, {2});
  RirOptions opt;
  opt.tail_seconds = 0.4;
  auto rirs = generate_rirs(scene, opt);
  REQUIRE(rirs.all_finite());
  double estimate = 0.0;
  int counted = 0;
  for (std::size_t mic : {0u, 9u, 17u}) {
    const auto h = rirs.rir(0, mic);
    std::vector<double> edc(h.size() + 1, 0.0);
    for (std::size_t n = h.size(); n-- > 0;) edc[n] = edc[n + 1] + double(h[n]) * h[n];
    for (std::size_t n = 1; n < h.size(); ++n) REQUIRE(edc[n] <= edc[n - 1]);
    // Least-squares slope of the -5..-25 dB span, extrapolated to 60 dB.
    double sx = 0, sy = 0, sxx = 0, sxy = 0, k = 0;
    for (std::size_t n = 0; n < h.size(); ++n) {
      const double db = 10.0 * std::log10(edc[n] / edc[0]);
      if (db > -5.0 || db < -25.0) continue;
      const double t = static_cast<double>(n) / 16000.0;
      sx += t, sy += db, sxx += t * t, sxy += t * db, k += 1;
    }
    REQUIRE(k > 100);
    const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    estimate += -60.0 / slope;
    ++counted;
  }
  CHECK(estimate / counted == Catch::Approx(0.5).epsilon(0.2));
}

TEST_CASE("rendering with a unit impulse copies the source") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.5);
  place_sources(scene, {1});
  RirSet unit(1, 24, 1);
  for (std::size_t m = 0; m < 24; ++m) unit.rir(0, m)[0] = 1.0f;
  auto src = testing::random_signal(1, 300, 1);
  auto out = render_mixture(scene, unit, {src});
  REQUIRE(out.mix.channels() == 24);
  REQUIRE(out.mix.length() == 300);
  for (std::size_t m = 0; m < 24; ++m) CHECK(testing::max_abs_diff(out.mix.channel(m), src.channel(0)) == 0.0);
  CHECK_THROWS_AS(render_mixture(scene, unit, {src, src}), ContractError);
}

TEST_CASE("rendering is linear and one source equals its own reference") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.4);
  place_sources(scene, {3});
  RirOptions opt;
  opt.tail_seconds = 0.1;
  auto rirs = generate_rirs(scene, opt);
  auto s = testing::random_signal(1, 2000, 2);
  auto s2 = s;
  for (float& v : s2.samples()) v *= 2.0f;
  auto a = render_mixture(scene, rirs, {s});
  auto b = render_mixture(scene, rirs, {s2});
  REQUIRE(a.mix.length() == 2000 + rirs.taps() - 1);
  double peak = 0.0;
  for (float v : a.mix.samples()) peak = std::max(peak, double(std::abs(v)));
  for (std::size_t i = 0; i < a.mix.samples().size(); ++i) {
    REQUIRE(std::abs(b.mix.samples()[i] - 2.0 * a.mix.samples()[i]) < 1e-6 * peak);
  }
  const auto layout = scene.layout();
  for (std::size_t p = 0; p < 4; ++p) {
    CHECK(testing::max_abs_diff(a.mix.channel(layout.raw_index(3, p)), a.refs[0].channel(p)) == 0.0);
  }
}

TEST_CASE("two sources superpose") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.4);
  place_sources(scene, {0, 5});
  RirOptions opt;
  opt.tail_seconds = 0.05;
  auto rirs = generate_rirs(scene, opt);
  auto s0 = testing::random_signal(1, 1500, 3);
  auto s1 = testing::random_signal(1, 1500, 4);
  auto both = render_mixture(scene, rirs, {s0, s1});
  MultichannelSignal silent(1, 1500);
  auto only0 = render_mixture(scene, rirs, {s0, silent});
  auto only1 = render_mixture(scene, rirs, {silent, s1});
  for (std::size_t i = 0; i < both.mix.samples().size(); ++i) {
    REQUIRE(both.mix.samples()[i] == Catch::Approx(only0.mix.samples()[i] + only1.mix.samples()[i]).margin(1e-6));
  }
}

TEST_CASE("noise is scaled to the requested SDR") {
  auto mix = testing::random_signal(4, 3000, 5);
  auto noise = testing::random_signal(4, 1000, 6, 3.0);  // shorter: repeated cyclically
  for (double sdr : {0.0, 15.0, -20.0}) {
    auto out = add_noise_at_sdr(mix, noise, sdr);
    double es = 0.0, en = 0.0;
    for (std::size_t i = 0; i < mix.samples().size(); ++i) {
      const double d = double(out.samples()[i]) - mix.samples()[i];
      es += double(mix.samples()[i]) * mix.samples()[i];
      en += d * d;
    }
    CHECK(en == Catch::Approx(es / std::pow(10.0, sdr / 10.0)).epsilon(1e-5));
  }
  CHECK_THROWS_AS(add_noise_at_sdr(MultichannelSignal(4, 100), noise, 0.0), DomainError);
}

TEST_CASE("diffuse noise reaches every microphone") {
  auto scene = build_cabin(1.6, 2.4, 1.3, 0.4);
  std::mt19937_64 rng(3);
  auto n = diffuse_noise(scene, 4000, rng);
  REQUIRE(n.channels() == 24);
  REQUIRE(n.all_finite());
  for (std::size_t c = 0; c < 24; ++c) CHECK(rms(n, c) > 0.0);
}

TEST_CASE("simulated items are deterministic and respect the ranges") {
  DatasetSpec spec;
  spec.count = 3;
  spec.seed = 42;
  spec.duration = 0.5;
  spec.rir_tail = 0.1;
  for (std::size_t i = 0; i < 3; ++i) {
    auto a = simulate_item(spec, i);
    auto b = simulate_item(spec, i);
    REQUIRE(a.mix.channels() == 24);
    CHECK(testing::max_abs_diff(a.mix.samples(), b.mix.samples()) == 0.0);
    const auto& r = a.record;
    CHECK(r.zones_active.size() >= 1);
    CHECK(r.zones_active.size() <= 6);
    CHECK(a.refs.size() == r.zones_active.size());
    CHECK(r.rt60 >= 0.3);
    CHECK(r.rt60 <= 0.7);
    CHECK(r.sdr_db >= -20.0);
    CHECK(r.sdr_db <= 15.0);
    CHECK(r.scene_dims[0] >= 1.5);
    CHECK(r.scene_dims[0] <= 1.7);
    CHECK(a.mix.all_finite());
  }
}

TEST_CASE("batch simulation writes identical files for the same seed") {
  DatasetSpec spec;
  spec.count = 2;
  spec.seed = 7;
  spec.duration = 0.4;
  spec.rir_tail = 0.08;
  const auto d1 = testing::scratch_dir("sim_a");
  const auto d2 = testing::scratch_dir("sim_b");
  auto r1 = simulate_batch(spec, d1);
  auto r2 = simulate_batch(spec, d2);
  REQUIRE(r1.size() == 2);
  CHECK(slurp(d1 / "manifest.jsonl") == slurp(d2 / "manifest.jsonl"));
  CHECK(slurp(d1 / r1[1].mix_path) == slurp(d2 / r2[1].mix_path));
  auto loaded = load_manifest(d1 / "manifest.jsonl");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].id == r1[0].id);
  CHECK(load_wav(loaded[0].mix_path).channels() == 24);
}
