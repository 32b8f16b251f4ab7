#include "dualsep/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

#include "dualsep/error.hpp"

namespace dualsep {
namespace {

using json = nlohmann::ordered_json;

void allow_only(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError("config '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ValidationError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + where + "." + key + "' has the wrong type");
  }
}

void read_range(const json& j, const char* key, Range& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ValidationError("config key '" + where + "." + key + "' must be [lo, hi]");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

void parse_pipeline(const json& j, PipelineConfig& p) {
  const std::string w = "pipeline";
  allow_only(j, w, {"mode", "sample_rate", "layout", "stft", "steering", "iva", "model"});
  if (j.contains("mode")) {
    std::string mode;
    read(j, "mode", mode, w);
    p.mode = mode_from_string(mode);
  }
  read(j, "sample_rate", p.sample_rate, w);
  if (j.contains("layout")) {
    const json& l = j.at("layout");
    allow_only(l, w + ".layout", {"zones", "mics_per_zone"});
    read(l, "zones", p.layout.zones, w + ".layout");
    read(l, "mics_per_zone", p.layout.mics_per_zone, w + ".layout");
  }
  if (j.contains("stft")) {
    const json& s = j.at("stft");
    allow_only(s, w + ".stft", {"fft_size", "win_length", "hop"});
    read(s, "fft_size", p.stft.fft_size, w + ".stft");
    read(s, "win_length", p.stft.win_length, w + ".stft");
    read(s, "hop", p.stft.hop, w + ".stft");
  }
  if (j.contains("steering")) {
    std::vector<std::vector<double>> delays;
    read(j, "steering", delays, w);
    p.steering.clear();
    for (auto& d : delays) p.steering.push_back(SteeringSpec{std::move(d), GainNorm::inverse_p});
  }
  if (j.contains("iva")) {
    const json& v = j.at("iva");
    const std::string wi = w + ".iva";
    allow_only(v, wi, {"mode", "eta", "max_iter", "tol", "max_halvings", "block_frames", "inner_iters"});
    if (v.contains("mode")) {
      std::string mode;
      read(v, "mode", mode, wi);
      p.iva_mode = iva_mode_from_string(mode);
    }
    read(v, "eta", p.iva.eta, wi);
    read(v, "tol", p.iva.tol, wi);
    read(v, "max_halvings", p.iva.max_halvings, wi);
    read(v, "max_iter", p.iva.max_iter, wi);
    read(v, "block_frames", p.online_iva.block_frames, wi);
    read(v, "inner_iters", p.online_iva.inner_iters, wi);
    p.online_iva.eta = p.iva.eta;
    p.online_iva.tol = p.iva.tol;
    p.online_iva.max_halvings = p.iva.max_halvings;
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    const std::string wm = w + ".model";
    allow_only(m, wm, {"variant", "causal", "weights"});
    if (m.contains("variant")) {
      std::string v;
      read(m, "variant", v, wm);
      p.model.variant = nn::variant_from_string(v);
    }
    read(m, "causal", p.model.causal, wm);
    if (m.contains("weights")) {
      if (m.at("weights").is_null()) {
        p.weights_path.reset();
      } else {
        std::string path;
        read(m, "weights", path, wm);
        p.weights_path = path;
      }
    }
  }
}

void parse_dataset(const json& j, DatasetSpec& d) {
  const std::string w = "dataset";
  allow_only(j, w, {"count", "width", "length", "height", "rt60", "sdr_db", "min_sources", "max_sources", "duration",
                    "rir_tail", "add_noise"});
  read(j, "count", d.count, w);
  read_range(j, "width", d.width, w);
  read_range(j, "length", d.length, w);
  read_range(j, "height", d.height, w);
  read_range(j, "rt60", d.rt60, w);
  read_range(j, "sdr_db", d.sdr_db, w);
  read(j, "min_sources", d.min_sources, w);
  read(j, "max_sources", d.max_sources, w);
  read(j, "duration", d.duration, w);
  read(j, "rir_tail", d.rir_tail, w);
  read(j, "add_noise", d.add_noise, w);
}

}  // namespace

void CliConfig::resolve() {
  // Streaming is defined on block-online IVA.
  if (pipeline.mode == PipelineMode::streaming) pipeline.iva_mode = IvaMode::block_online;
  pipeline.model.zones = pipeline.layout.zones;
  pipeline.model.bins = pipeline.stft.bins();
  dataset.seed = seed;
  if (threads < 1) throw ValidationError("threads must be at least 1");
  if (bench.repeats < 1) throw ValidationError("bench repeats must be at least 1");
  pipeline.validate();
  dataset.validate();
}

CliConfig parse_cli_config(const std::string& text, const CliConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  CliConfig c = base;
  allow_only(j, "", {"seed", "threads", "pipeline", "dataset", "bench"});
  read(j, "seed", c.seed, "");
  read(j, "threads", c.threads, "");
  if (j.contains("pipeline")) parse_pipeline(j.at("pipeline"), c.pipeline);
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), c.dataset);
  if (j.contains("bench")) {
    const json& b = j.at("bench");
    allow_only(b, "bench", {"duration", "repeats"});
    read(b, "duration", c.bench.duration, "bench");
    read(b, "repeats", c.bench.repeats, "bench");
  }
  return c;
}

CliConfig load_cli_config(const std::filesystem::path& path, const CliConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();
  return parse_cli_config(text.str(), base);
}

std::string to_json(const CliConfig& c) {
  const PipelineConfig& p = c.pipeline;
  json steering = json::array();
  for (const auto& s : p.steering) steering.push_back(s.delays);
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["pipeline"] = {
      {"mode", to_string(p.mode)},
      {"sample_rate", p.sample_rate},
      {"layout", {{"zones", p.layout.zones}, {"mics_per_zone", p.layout.mics_per_zone}}},
      {"stft", {{"fft_size", p.stft.fft_size}, {"win_length", p.stft.win_length}, {"hop", p.stft.hop}}},
      {"steering", steering},
      {"iva",
       {{"mode", to_string(p.iva_mode)},
        {"eta", p.iva.eta},
        {"max_iter", p.iva.max_iter},
        {"tol", p.iva.tol},
        {"max_halvings", p.iva.max_halvings},
        {"block_frames", p.online_iva.block_frames},
        {"inner_iters", p.online_iva.inner_iters}}},
      {"model",
       {{"variant", nn::to_string(p.model.variant)},
        {"causal", p.model.causal},
        {"weights", p.weights_path ? json(p.weights_path->string()) : json(nullptr)}}}};
  const DatasetSpec& d = c.dataset;
  j["dataset"] = {{"count", d.count},
                  {"width", {d.width.lo, d.width.hi}},
                  {"length", {d.length.lo, d.length.hi}},
                  {"height", {d.height.lo, d.height.hi}},
                  {"rt60", {d.rt60.lo, d.rt60.hi}},
                  {"sdr_db", {d.sdr_db.lo, d.sdr_db.hi}},
                  {"min_sources", d.min_sources},
                  {"max_sources", d.max_sources},
                  {"duration", d.duration},
                  {"rir_tail", d.rir_tail},
                  {"add_noise", d.add_noise}};
  j["bench"] = {{"duration", c.bench.duration}, {"repeats", c.bench.repeats}};
  return j.dump(2) + "\n";
}

}  // namespace dualsep
