#include "dualsep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

#include "dualsep/error.hpp"
#include "dualsep/speech_surrogate.hpp"
#include "dualsep/wav.hpp"

namespace dualsep {
namespace {

using json = nlohmann::ordered_json;

double draw(const Range& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return r.lo + (r.hi - r.lo) * unit(rng);
}

std::string item_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%05zu", index);
  return buf;
}

}  // namespace

void Range::validate(const char* name) const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw ValidationError(std::string("range '") + name + "' must be finite with lo <= hi");
  }
}

void DatasetSpec::validate() const {
  if (count < 1) throw ValidationError("dataset count must be at least 1");
  width.validate("width");
  length.validate("length");
  height.validate("height");
  rt60.validate("rt60");
  sdr_db.validate("sdr_db");
  if (width.lo <= 0 || length.lo <= 0 || height.lo <= 0) throw ValidationError("cabin dimensions must be positive");
  if (rt60.lo <= 0) throw ValidationError("rt60 range must be positive");
  if (min_sources < 1 || min_sources > max_sources || max_sources > 6) {
    throw ValidationError("source counts must satisfy 1 <= min_sources <= max_sources <= 6");
  }
  if (!(duration > 0.0) || !(rir_tail > 0.0)) throw ValidationError("duration and rir_tail must be positive");
}

SimulatedItem simulate_item(const DatasetSpec& spec, std::size_t index) {
  spec.validate();
  std::mt19937_64 rng(spec.seed ^ static_cast<std::uint64_t>(index));

  const double w = draw(spec.width, rng);
  const double l = draw(spec.length, rng);
  const double h = draw(spec.height, rng);
  const double rt60 = draw(spec.rt60, rng);
  CabinScene scene = build_cabin(w, l, h, rt60);
  scene.seed = spec.seed ^ static_cast<std::uint64_t>(index);

  std::uniform_int_distribution<std::size_t> count_dist(spec.min_sources, spec.max_sources);
  const std::size_t n = count_dist(rng);
  std::vector<std::size_t> zones(scene.zone_count());
  std::iota(zones.begin(), zones.end(), std::size_t{0});
  std::shuffle(zones.begin(), zones.end(), rng);
  zones.resize(n);
  std::sort(zones.begin(), zones.end());
  place_sources(scene, zones, &rng);

  const auto samples = static_cast<std::size_t>(std::lround(spec.duration * scene.sample_rate));
  std::vector<MultichannelSignal> speech;
  for (std::size_t i = 0; i < n; ++i) speech.push_back(speech_surrogate(samples, rng, scene.sample_rate));

  RirOptions options;
  options.tail_seconds = spec.rir_tail;
  const RirSet rirs = generate_rirs(scene, options);
  RenderedMixture rendered = render_mixture(scene, rirs, speech);

  const double sdr = draw(spec.sdr_db, rng);
  if (spec.add_noise) {
    const MultichannelSignal noise = diffuse_noise(scene, rendered.mix.length(), rng);
    rendered.mix = add_noise_at_sdr(rendered.mix, noise, sdr);
  }

  SimulatedItem item;
  item.record.id = item_id(index);
  item.record.zones_active = zones;
  item.record.rt60 = rt60;
  item.record.sdr_db = spec.add_noise ? sdr : std::numeric_limits<double>::infinity();
  item.record.scene_dims = {w, l, h};
  item.record.source_positions = scene.sources;
  item.record.mix_path = item.record.id + "_mix.wav";
  for (std::size_t z : zones) item.record.ref_paths.emplace_back(item.record.id + "_ref_zone" + std::to_string(z + 1) + ".wav");
  item.mix = std::move(rendered.mix);
  item.refs = std::move(rendered.refs);
  return item;
}

std::string manifest_line(const ManifestRecord& record) {
  json j;
  j["id"] = record.id;
  j["mix_path"] = record.mix_path.generic_string();
  json refs = json::array();
  for (const auto& p : record.ref_paths) refs.push_back(p.generic_string());
  j["ref_paths"] = refs;
  j["zones_active"] = record.zones_active;
  j["rt60"] = record.rt60;
  // JSON has no infinity; a noiseless item records null.
  j["sdr_db"] = std::isfinite(record.sdr_db) ? json(record.sdr_db) : json(nullptr);
  j["scene_dims"] = record.scene_dims;
  json positions = json::array();
  for (const auto& p : record.source_positions) positions.push_back({p.x, p.y, p.z});
  j["source_positions"] = positions;
  return j.dump();
}

std::vector<ManifestRecord> simulate_batch(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  std::vector<ManifestRecord> records;
  std::string manifest;
  for (std::size_t i = 0; i < spec.count; ++i) {
    SimulatedItem item = simulate_item(spec, i);
    try {
      save_wav(item.mix, out_dir / item.record.mix_path);
      for (std::size_t k = 0; k < item.refs.size(); ++k) save_wav(item.refs[k], out_dir / item.record.ref_paths[k]);
    } catch (const IoError& e) {
      throw IoError("item " + std::to_string(i) + " (" + item.record.id + "): " + e.what());
    }
    manifest += manifest_line(item.record) + "\n";
    records.push_back(std::move(item.record));
  }
  const auto path = out_dir / "manifest.jsonl";
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  file << manifest;
  if (!file) throw IoError("failed writing '" + path.string() + "'");
  return records;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.mix_path = resolve(j.at("mix_path").get<std::string>());
      for (const auto& p : j.at("ref_paths")) r.ref_paths.push_back(resolve(p.get<std::string>()));
      r.zones_active = j.at("zones_active").get<std::vector<std::size_t>>();
      r.rt60 = j.at("rt60").get<double>();
      r.sdr_db = j.at("sdr_db").is_null() ? std::numeric_limits<double>::infinity() : j.at("sdr_db").get<double>();
      r.scene_dims = j.at("scene_dims").get<std::array<double, 3>>();
      for (const auto& p : j.at("source_positions")) r.source_positions.push_back({p.at(0), p.at(1), p.at(2)});
      if (r.ref_paths.size() != r.zones_active.size()) throw ValidationError("ref_paths and zones_active differ in length");
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ValidationError("manifest '" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace dualsep
