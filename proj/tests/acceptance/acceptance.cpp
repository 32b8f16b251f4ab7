// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Optional arguments pick criteria by number, e.g. `acceptance 2 9`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualsep/beamform.hpp"
#include "dualsep/dataset.hpp"
#include "dualsep/iva.hpp"
#include "dualsep/metrics.hpp"
#include "dualsep/nn/model.hpp"
#include "dualsep/pipeline.hpp"
#include "dualsep/speech_surrogate.hpp"
#include "dualsep/stft.hpp"

using namespace dualsep;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

double max_abs(std::span<const cfloat> a, std::span<const cfloat> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

MultichannelSignal random_signal(std::size_t channels, std::size_t length, std::mt19937_64& rng, float scale = 1.0f) {
  std::normal_distribution<float> g(0.0f, scale);
  MultichannelSignal s(channels, length);
  for (float& v : s.samples()) v = g(rng);
  return s;
}

ComplexSpectrogram random_spectrum(std::size_t frames, std::size_t channels, std::mt19937_64& rng) {
  ComplexSpectrogram s(frames, channels, StftConfig{}, frames * StftConfig{}.hop);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (auto& v : s.data()) v = {g(rng), g(rng)};
  return s;
}

PipelineConfig causal_pipeline(PipelineMode mode) {
  PipelineConfig c;
  c.mode = mode;
  c.iva_mode = IvaMode::block_online;
  c.model.causal = true;
  return c;
}

// ---------------------------------------------------------------------------

Outcome stft_round_trip() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(16000, 160000), ch(1, 4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto x = random_signal(ch(rng), len(rng), rng, 0.5f);
    const auto y = synthesize(analyze(x));
    if (y.length() != x.length()) return {false, "length changed"};
    worst = std::max(worst, max_abs(x.samples(), y.samples()));
  }
  return {worst < 1e-6, fmt("max |istft(stft(x)) - x| = %.3g over 100 signals of 1-10 s (bound 1e-6)", worst)};
}

Outcome streaming_equals_offline() {
  const auto off = causal_pipeline(PipelineMode::offline);
  const auto st = causal_pipeline(PipelineMode::streaming);
  const nn::Model model(off.model, nn::init_random(off.model, 202));
  DatasetSpec data;
  data.count = 20;
  data.seed = 202;
  data.duration = 2.0;
  data.rir_tail = 0.1;
  double pipe = 0.0, net = 0.0;
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto item = simulate_item(data, i);
    const auto a = separate_offline(item.mix, off, &model);
    const auto b = separate_offline(item.mix, st, &model);
    for (std::size_t z = 0; z < a.size(); ++z) pipe = std::max(pipe, max_abs(a[z].samples(), b[z].samples()));

    const auto spec_bf = analyze(delay_and_sum(item.mix, off.resolved_steering()), off.stft);
    const auto spec_iva = run_block_online(spec_bf, off.online_iva);
    const auto ref = model.forward(spec_bf, spec_iva);
    auto state = model.make_state();
    for (std::size_t t = 0; t < spec_bf.frames(); ++t) {
      const auto y = model.step(spec_bf.frame(t), spec_iva.frame(t), state);
      net = std::max(net, max_abs(y, ref.separated.frame(t)));
    }
  }
  return {pipe < 1e-4 && net < 1e-5,
          fmt("20 utterances: pipeline max diff %.3g (bound 1e-4), network step vs forward %.3g (bound 1e-5)", pipe, net)};
}

Outcome causality_probe() {
  std::mt19937_64 rng(303);
  std::size_t checked = 0;
  bool ok = true;
  std::string where;

  // Network, both variants, spectral inputs.
  for (auto variant : {nn::Variant::S, nn::Variant::L}) {
    nn::ModelConfig cfg;
    cfg.variant = variant;
    cfg.causal = true;
    const nn::Model model(cfg, nn::init_random(cfg, rng()));
    const std::size_t T = 24;
    for (int pair = 0; pair < 50; ++pair) {
      auto bf = random_spectrum(T, cfg.zones, rng);
      auto iva = random_spectrum(T, cfg.zones, rng);
      const std::size_t t0 = 1 + rng() % (T - 1);
      const auto a = model.forward(bf, iva);
      for (std::size_t t = t0; t < T; ++t) {
        for (auto& v : bf.frame(t)) v += cfloat(0.5f, -0.25f);
        for (auto& v : iva.frame(t)) v *= -1.5f;
      }
      const auto b = model.forward(bf, iva);
      const std::size_t n = t0 * cfg.bins * cfg.zones;
      if (std::memcmp(a.masks.data().data(), b.masks.data().data(), n * sizeof(cfloat)) != 0) {
        ok = false;
        where = fmt("%s model, t0=%zu", nn::to_string(variant), t0);
      }
      ++checked;
    }
  }

  // Beamformer and STFT front end: a raw sample perturbation reaches no earlier frame.
  const PipelineConfig pc = causal_pipeline(PipelineMode::streaming);
  for (int pair = 0; pair < 50; ++pair) {
    auto raw = random_signal(24, 8000, rng).as_raw_mics(pc.layout);
    const std::size_t n0 = 512 + rng() % 7000;
    const auto a = analyze(delay_and_sum(raw, pc.resolved_steering()), pc.stft);
    for (std::size_t c = 0; c < 24; ++c) raw.at(c, n0) += 1.0f;
    const auto b = analyze(delay_and_sum(raw, pc.resolved_steering()), pc.stft);
    // Frame t covers original samples up to t*hop + hop - 1.
    const std::size_t first = n0 / pc.stft.hop;
    const std::size_t n = first * pc.stft.bins() * 6;
    if (std::memcmp(a.data().data(), b.data().data(), n * sizeof(cfloat)) != 0) {
      ok = false;
      where = fmt("front end, sample %zu", n0);
    }
    ++checked;
  }
  return {ok, ok ? fmt("%zu perturbation pairs (S, L network and BF+STFT front end): earlier frames bit-identical", checked)
                 : "earlier output changed: " + where};
}

Outcome das_array_gain() {
  std::mt19937_64 rng(404);
  const ChannelLayout layout{1, 4};
  const std::size_t N = 8000;
  double total = 0.0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const auto s = random_signal(1, N, rng);
    auto target = MultichannelSignal::raw_mics(layout, N);
    for (std::size_t p = 0; p < 4; ++p) std::copy(s.channel(0).begin(), s.channel(0).end(), target.channel(p).begin());
    auto noise = random_signal(4, N, rng).as_raw_mics(layout);
    // DAS is linear, so each component can be beamformed on its own.
    const auto ts = delay_and_sum(target);
    const auto tn = delay_and_sum(noise);
    double ps_in = 0.0, pn_in = 0.0, ps_out = 0.0, pn_out = 0.0;
    for (std::size_t p = 0; p < 4; ++p) {
      for (std::size_t n = 0; n < N; ++n) {
        ps_in += double(target.at(p, n)) * target.at(p, n);
        pn_in += double(noise.at(p, n)) * noise.at(p, n);
      }
    }
    for (std::size_t n = 0; n < N; ++n) {
      ps_out += double(ts.at(0, n)) * ts.at(0, n);
      pn_out += double(tn.at(0, n)) * tn.at(0, n);
    }
    total += 10.0 * std::log10(ps_out / pn_out) - 10.0 * std::log10(ps_in / pn_in);
  }
  const double gain = total / trials;
  const double theory = 10.0 * std::log10(4.0);
  return {std::abs(gain - theory) <= 0.5, fmt("mean SNR gain %.3f dB over %d trials (target %.2f +- 0.5)", gain, trials, theory)};
}

// Determined convolutive mixtures: microphone k hears source k directly and
// every other source attenuated and delayed by a few samples.
Outcome iva_separation() {
  bool monotone = true;
  double worst_rise = -1e300;
  std::string detail;
  bool ok = true;
  for (std::size_t M : {2u, 3u}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(5000 + 100 * M + seed);
      const std::size_t N = 5 * 16000;
      std::vector<MultichannelSignal> src;
      for (std::size_t j = 0; j < M; ++j) src.push_back(speech_surrogate(N, rng));
      std::uniform_real_distribution<double> gain(0.4, 0.8);
      std::uniform_int_distribution<std::size_t> delay(1, 12);
      MultichannelSignal mix(M, N);
      for (std::size_t k = 0; k < M; ++k) {
        for (std::size_t j = 0; j < M; ++j) {
          const double g = k == j ? 1.0 : gain(rng);
          const std::size_t d = k == j ? 0 : delay(rng);
          for (std::size_t n = d; n < N; ++n) mix.at(k, n) += static_cast<float>(g * src[j].at(0, n - d));
        }
      }
      const auto res = run_iva(analyze(mix));
      for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
        const double rise = res.objective_trace[i] - res.objective_trace[i - 1];
        worst_rise = std::max(worst_rise, rise);
        if (rise > 1e-6) monotone = false;
      }
      const auto out = synthesize(res.separated);
      std::vector<std::span<const float>> refs, ins, outs;
      for (std::size_t j = 0; j < M; ++j) {
        refs.push_back(src[j].channel(0));
        ins.push_back(mix.channel(j));
        outs.push_back(out.channel(j));
      }
      sum += sir_best_perm(outs, refs).value - sir_best_perm(ins, refs).value;
    }
    const double mean = sum / 20.0;
    ok = ok && mean >= 10.0;
    detail += fmt("M=%zu mean SiSNR improvement %.2f dB; ", M, mean);
  }
  detail += fmt("largest objective change per accepted step %.3g (bound +1e-6)", worst_rise);
  return {ok && monotone, detail + " (improvement bound 10 dB)"};
}

Outcome dsp_chain_direction() {
  DatasetSpec data;  // default desk-scale cabin set
  data.count = 20;
  data.seed = 606;
  PipelineConfig cfg;
  double un = 0.0, bf = 0.0, bi = 0.0;
  for (std::size_t i = 0; i < data.count; ++i) {
    const auto item = simulate_item(data, i);
    const auto& zones = item.record.zones_active;
    un += score_utterance(item.record.id, item.mix, item.refs, zones, EvalSystem::unprocessed, cfg, nullptr).sisnr_out;
    bf += score_utterance(item.record.id, item.mix, item.refs, zones, EvalSystem::bf, cfg, nullptr).sisnr_out;
    bi += score_utterance(item.record.id, item.mix, item.refs, zones, EvalSystem::bf_iva, cfg, nullptr).sisnr_out;
  }
  un /= 20.0;
  bf /= 20.0;
  bi /= 20.0;
  return {bf > un && bi >= bf + 1.0,
          fmt("mean SiSNR unprocessed %.2f, BF %.2f, BF+IVA %.2f dB (need BF > unprocessed and BF+IVA >= BF + 1)", un, bf, bi)};
}

Outcome parameter_budget() {
  nn::ModelConfig s;
  s.causal = true;
  nn::ModelConfig l = s;
  l.variant = nn::Variant::L;
  const auto ns = nn::count_params(s), nl = nn::count_params(l);
  const bool ok = ns >= 600000 && ns <= 1100000 && nl >= ns && nl <= 1400000;
  return {ok, fmt("S %zu in [0.6M, 1.1M], L %zu in [S, 1.4M]", ns, nl)};
}

Outcome real_time_factor() {
  const auto cfg = causal_pipeline(PipelineMode::streaming);
  auto model = std::make_shared<const nn::Model>(cfg.model, nn::init_random(cfg.model, 808));
  const auto r = measure_rtf(cfg, model, 30.0, 3, 808);
  const auto& s = r.stage_seconds;
  return {r.median < 1.0,
          fmt("streaming S on 30 s: RTF median %.3f, p95 %.3f (bound 1.0); stages bf %.2f s, stft %.2f s, iva %.2f s, "
              "nn %.2f s, istft %.2f s; latency %.3f s",
              r.median, r.p95, s.bf, s.stft, s.iva, s.nn, s.istft, r.latency_seconds)};
}

Outcome identity_rig() {
  std::mt19937_64 rng(909);
  double tfcm_err = 0.0, tp_err = 0.0;
  std::size_t layers = 0;
  auto random_tensor = [&](std::size_t T, std::size_t D, std::size_t Z, std::size_t F) {
    auto x = nn::FeatureTensor::zeros(T, D, Z, F);
    std::normal_distribution<float> g(0.0f, 1.0f);
    for (auto& f : x.frames) {
      for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
    }
    return x;
  };
  auto diff = [](const nn::FeatureTensor& a, const nn::FeatureTensor& b) {
    double m = 0.0;
    for (std::size_t t = 0; t < a.time(); ++t) m = std::max(m, double((a.frames[t] - b.frames[t]).cwiseAbs().maxCoeff()));
    return m;
  };
  for (bool causal : {true, false}) {
    nn::ModelConfig cfg;
    cfg.causal = causal;
    const auto zeros = nn::init_zeros(cfg);
    const std::size_t blocks = cfg.enc_channels.size();
    for (std::size_t b = 0; b < blocks; ++b) {
      for (const char* stack : {"spectral_enc", "spatial_enc", "decoder"}) {
        const auto dir = std::strcmp(stack, "decoder") == 0 ? nn::Direction::up : nn::Direction::down;
        const auto block = nn::load_gated_block(zeros, std::string(stack) + ".b" + std::to_string(b), dir, cfg);
        for (const auto& tfcm : block.tfcms) {
          const auto x = random_tensor(12, tfcm.pw.in, cfg.zones, 9);
          tfcm_err = std::max(tfcm_err, diff(nn::tfcm_forward(x, tfcm, causal), x));
          ++layers;
        }
      }
    }
    for (std::size_t l = 0; l < cfg.triple_path_layers; ++l) {
      const auto tp = nn::load_triple_path(zeros, "tp" + std::to_string(l), causal);
      const auto x = random_tensor(12, cfg.hidden, cfg.zones, cfg.latent_bins());
      tp_err = std::max(tp_err, diff(nn::triple_path_forward(x, tp, causal), x));
      ++layers;
    }
  }

  auto cfg = causal_pipeline(PipelineMode::offline);
  auto w = nn::init_random(cfg.model, 909);
  nn::rig_unit_mask(w, cfg.model);
  const nn::Model model(cfg.model, w);
  DatasetSpec data;
  data.count = 1;
  data.seed = 909;
  data.duration = 2.0;
  data.rir_tail = 0.1;
  const auto item = simulate_item(data, 0);
  const auto out = separate_offline(item.mix, cfg, &model);
  auto bf_cfg = cfg;
  bf_cfg.mode = PipelineMode::bf_only;
  const auto bf = separate_offline(item.mix, bf_cfg, nullptr);
  double mask_err = 0.0;
  for (std::size_t z = 0; z < out.size(); ++z) mask_err = std::max(mask_err, max_abs(out[z].samples(), bf[z].samples()));
  return {tfcm_err == 0.0 && tp_err == 0.0 && mask_err < 1e-5,
          fmt("%zu zeroed TFCM/triple-path layers: max deviation %.3g / %.3g (exact); unit mask vs BF %.3g (bound 1e-5)",
              layers, tfcm_err, tp_err, mask_err)};
}

// --- CLI determinism --------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_bin(const std::string& bin, const std::string& args) {
  const std::string cmd = "\"" + bin + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Files below `dir`, relative, sorted.
std::vector<fs::path> tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  return files;
}

Outcome cli_determinism() {
  const char* env = std::getenv("DUALSEP_BIN");
  if (env == nullptr) return {false, "DUALSEP_BIN is not set"};
  const std::string bin = env;
  const fs::path root = fs::temp_directory_path() / "dualsep_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"seed": 10, "dataset": {"count": 2, "duration": 1.0, "rir_tail": 0.1, "max_sources": 4}})";
  }
  const std::string conf = "--config \"" + (root / "config.json").string() + "\" ";

  std::vector<std::string> failures;
  std::size_t compared = 0;
  for (const char* run : {"r1", "r2"}) {
    const fs::path d = root / run;
    const std::string q = "\"" + d.string() + "\"";
    auto must = [&](const std::string& name, const std::string& args) {
      if (run_bin(bin, conf + args) != 0) failures.push_back(std::string(run) + " " + name + " exited nonzero");
    };
    must("init-weights", "init-weights --out " + q + "/w.bin");
    must("simulate", "simulate --out " + q + "/sim");
    const std::string mix = q + "/sim/" + nlohmann::json::parse(read_file(d / "sim" / "manifest.jsonl").substr(0, read_file(d / "sim" / "manifest.jsonl").find('\n')))["mix_path"].get<std::string>();
    must("separate", "--weights " + q + "/w.bin separate --in " + mix + " --out " + q + "/sep");
    must("separate dsp-only", "--mode dsp-only separate --in " + mix + " --out " + q + "/sep_dsp");
    must("eval", "eval --manifest " + q + "/sim/manifest.jsonl --system bf_iva --out " + q + "/eval.json --csv " + q + "/eval.csv");
    must("eval dualsep", "--weights " + q + "/w.bin eval --manifest " + q +
                             "/sim/manifest.jsonl --system dualsep --out " + q + "/eval_nn.json");
    must("spectrogram", "spectrogram --in " + q + "/sep/zone1.wav --out " + q + "/img/zone1.png");
    must("spectrogram multichannel", "spectrogram --in " + mix + " --out " + q + "/img/mix.pgm");
    must("bench", "--mode dsp-only bench --duration 5 --repeats 1 --out " + q + "/bench.json");
  }
  const auto a = tree(root / "r1"), b = tree(root / "r2");
  if (a != b) failures.push_back("runs produced different file sets");
  for (const auto& rel : a) {
    if (std::find(b.begin(), b.end(), rel) == b.end()) continue;
    const auto x = read_file(root / "r1" / rel), y = read_file(root / "r2" / rel);
    ++compared;
    if (rel == "bench.json") {
      // Wall-clock fields are isolated under "timing"; everything else must match.
      auto jx = nlohmann::json::parse(x), jy = nlohmann::json::parse(y);
      jx.erase("timing");
      jy.erase("timing");
      if (jx != jy) failures.push_back("bench.json differs outside timing");
    } else if (x != y) {
      failures.push_back(rel.string() + " differs");
    }
  }
  if (!failures.empty()) {
    std::string all;
    for (const auto& f : failures) all += f + "; ";
    return {false, all};
  }
  return {compared > 0,
          fmt("%zu artifacts from simulate, separate, eval, spectrogram, init-weights and bench byte-identical across two "
              "runs (bench compared without its wall-clock timing block)",
              compared)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "STFT round trip", 30.0, stft_round_trip},
      {2, "streaming equals offline", 120.0, streaming_equals_offline},
      {3, "causality probe", 120.0, causality_probe},
      {4, "DAS array gain", 60.0, das_array_gain},
      {5, "IVA separation", 180.0, iva_separation},
      {6, "DSP chain direction", 300.0, dsp_chain_direction},
      {7, "parameter budget", 0.0, parameter_budget},
      {8, "real-time factor", 120.0, real_time_factor},
      {9, "identity rig", 0.0, identity_rig},
      {10, "CLI determinism", 0.0, cli_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c.budget_seconds > 0.0) {
      timing += fmt(" of %.0f s", c.budget_seconds);
      if (secs > c.budget_seconds) {
        o.pass = false;
        o.detail += "; over the runtime budget";
      }
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " (" << timing << ")"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
