#include "dualsep/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dualsep/config_io.hpp"
#include "dualsep/dataset.hpp"
#include "dualsep/error.hpp"
#include "dualsep/image.hpp"
#include "dualsep/metrics.hpp"
#include "dualsep/nn/model.hpp"
#include "dualsep/pipeline.hpp"
#include "dualsep/wav.hpp"

namespace dualsep {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string mode, variant, causal, weights;
  std::size_t threads = 1;

  std::size_t count = 0;
  std::string in, out, manifest, system = "bf_iva", csv;
  double duration = 0.0;
  std::size_t repeats = 0;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

bool parse_bool(const std::string& flag, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError(flag + " expects true or false, got '" + v + "'");
}

CliConfig resolve_config(const CLI::App& app, const Flags& f) {
  CliConfig c = f.config.empty() ? CliConfig{} : load_cli_config(f.config);
  if (app.count("--seed")) c.seed = f.seed;
  if (app.count("--threads")) c.threads = f.threads;
  if (app.count("--mode")) c.pipeline.mode = mode_from_string(f.mode);
  if (app.count("--variant")) c.pipeline.model.variant = nn::variant_from_string(f.variant);
  if (app.count("--causal")) c.pipeline.model.causal = parse_bool("--causal", f.causal);
  if (app.count("--weights")) c.pipeline.weights_path = f.weights;
  c.resolve();
  return c;
}

nn::WeightStore weights_for_bench(const CliConfig& c) {
  if (c.pipeline.weights_path) return nn::load_weights(*c.pipeline.weights_path);
  return nn::init_random(c.pipeline.model, c.seed);
}

int cmd_simulate(CliConfig c, const Flags& f, const CLI::App& sub, std::ostream& out) {
  if (sub.count("--count")) c.dataset.count = f.count;
  c.dataset.validate();
  const auto records = simulate_batch(c.dataset, f.out);
  out << "wrote " << records.size() << " utterances to " << (fs::path(f.out) / "manifest.jsonl").string() << "\n";
  return 0;
}

int cmd_separate(const CliConfig& c, const Flags& f, std::ostream& out) {
  const MultichannelSignal mix = load_wav(f.in, c.pipeline.sample_rate);
  const auto zones = separate_offline(mix, c.pipeline);
  fs::create_directories(f.out);
  for (std::size_t z = 0; z < zones.size(); ++z) {
    save_wav(zones[z], fs::path(f.out) / ("zone" + std::to_string(z + 1) + ".wav"));
  }
  out << "wrote " << zones.size() << " zone signals to " << f.out << "\n";
  return 0;
}

int cmd_eval(const CliConfig& c, const Flags& f, std::ostream& out) {
  const EvalSystem system = system_from_string(f.system);
  std::shared_ptr<const nn::Model> model;
  if (system == EvalSystem::dualsep) {
    PipelineConfig p = c.pipeline;
    if (p.mode != PipelineMode::streaming) p.mode = PipelineMode::offline;
    model = load_model(p);
  }
  const EvalReport report = eval_manifest(f.manifest, system, c.pipeline, model.get(), c.threads);
  write_text(f.out, report.to_json());
  if (!f.csv.empty()) write_text(f.csv, report.to_csv());
  out << report.system << ": " << report.utterances.size() << " utterances, mean SiSNR " << report.sisnr_out
      << " dB (input " << report.sisnr_in << " dB)\n";
  for (const auto& m : report.missing) out << "missing: " << m << "\n";
  return 0;
}

int cmd_bench(CliConfig c, const Flags& f, const CLI::App& sub, std::ostream& out) {
  if (sub.count("--duration")) c.bench.duration = f.duration;
  if (sub.count("--repeats")) c.bench.repeats = f.repeats;
  if (c.bench.repeats < 1) throw ValidationError("--repeats must be at least 1");
  std::shared_ptr<const nn::Model> model;
  if (c.pipeline.uses_network()) model = std::make_shared<const nn::Model>(c.pipeline.model, weights_for_bench(c));
  const RtfReport r = measure_rtf(c.pipeline, model, c.bench.duration, c.bench.repeats, c.seed);

  json j;
  j["config"] = json::parse(to_json(c));
  j["params"] = c.pipeline.uses_network() ? json(nn::count_params(c.pipeline.model)) : json(nullptr);
  j["audio_seconds"] = r.audio_seconds;
  j["latency_seconds"] = r.latency_seconds;
  // Everything wall-clock lives under "timing"; the rest is reproducible.
  j["timing"] = {{"rtf", r.rtf},
                 {"median", r.median},
                 {"p95", r.p95},
                 {"stages_seconds",
                  {{"bf", r.stage_seconds.bf},
                   {"stft", r.stage_seconds.stft},
                   {"iva", r.stage_seconds.iva},
                   {"nn", r.stage_seconds.nn},
                   {"istft", r.stage_seconds.istft}}}};
  write_text(f.out, j.dump(2) + "\n");
  out << "RTF median " << r.median << ", p95 " << r.p95 << " over " << r.rtf.size() << " runs of " << r.audio_seconds
      << " s\n";
  return 0;
}

int cmd_spectrogram(const CliConfig& c, const Flags& f, std::ostream& out) {
  const MultichannelSignal s = load_wav(f.in, std::nullopt);
  const fs::path target(f.out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  for (std::size_t ch = 0; ch < s.channels(); ++ch) {
    fs::path path = target;
    if (s.channels() > 1) {
      path = target.parent_path() / (target.stem().string() + "_ch" + std::to_string(ch + 1) + target.extension().string());
    }
    const GrayImage img = spectrogram_image(s, ch, c.pipeline.stft);
    write_image(img, path);
    out << "wrote " << path.string() << " (" << img.width << "x" << img.height << ")\n";
  }
  return 0;
}

int cmd_init_weights(const CliConfig& c, const Flags& f, std::ostream& out) {
  const nn::WeightStore w = nn::init_random(c.pipeline.model, c.seed);
  const fs::path path(f.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nn::save_weights(w, path);
  out << "wrote " << w.total_size() << " parameters to " << path.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"In-car multichannel speech separation", "dualsep"};
  app.fallthrough();
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--mode", f.mode, "offline, streaming, dsp-only or bf-only");
  app.add_option("--variant", f.variant, "Model variant S or L");
  app.add_option("--causal", f.causal, "true or false");
  app.add_option("--weights", f.weights, "Weight file");
  app.add_option("--threads", f.threads, "Worker threads");

  auto* simulate = app.add_subcommand("simulate", "Simulate a cabin dataset");
  simulate->add_option("--count", f.count, "Utterances");
  simulate->add_option("--out", f.out, "Output directory")->required();

  auto* separate = app.add_subcommand("separate", "Separate a raw multichannel recording");
  separate->add_option("--in", f.in, "Raw microphone WAV")->required();
  separate->add_option("--out", f.out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score a system on a manifest");
  eval->add_option("--manifest", f.manifest, "manifest.jsonl")->required();
  eval->add_option("--system", f.system, "unprocessed, bf, bf_iva or dualsep");
  eval->add_option("--out", f.out, "Report JSON")->required();
  eval->add_option("--csv", f.csv, "Per-utterance CSV");

  auto* bench = app.add_subcommand("bench", "Measure the real-time factor");
  bench->add_option("--duration", f.duration, "Seconds of audio");
  bench->add_option("--repeats", f.repeats, "Timed runs");
  bench->add_option("--out", f.out, "Report JSON")->required();

  auto* spectrogram = app.add_subcommand("spectrogram", "Render log-magnitude spectrograms");
  spectrogram->add_option("--in", f.in, "WAV file")->required();
  spectrogram->add_option("--out", f.out, "Image path (.png or .pgm)")->required();

  auto* init = app.add_subcommand("init-weights", "Write seeded random weights");
  init->add_option("--out", f.out, "Weight file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "dualsep: " << e.what() << "\n";
    return 1;
  }

  try {
    const CliConfig c = resolve_config(app, f);
    err << "dualsep: resolved config\n" << to_json(c);
    if (simulate->parsed()) return cmd_simulate(c, f, *simulate, out);
    if (separate->parsed()) return cmd_separate(c, f, out);
    if (eval->parsed()) return cmd_eval(c, f, out);
    if (bench->parsed()) return cmd_bench(c, f, *bench, out);
    if (spectrogram->parsed()) return cmd_spectrogram(c, f, out);
    if (init->parsed()) return cmd_init_weights(c, f, out);
  } catch (const IoError& e) {
    err << "dualsep: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "dualsep: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "dualsep: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dualsep
