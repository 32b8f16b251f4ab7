#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualsep/cabin_sim.hpp"

namespace dualsep {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  void validate(const char* name) const;
};

struct DatasetSpec {
  std::size_t count = 20;
  std::uint64_t seed = 0;
  Range width{1.5, 1.7};
  Range length{2.3, 2.5};
  Range height{1.2, 1.5};
  Range rt60{0.3, 0.7};
  Range sdr_db{-20.0, 15.0};
  /// Active zones per utterance, drawn uniformly in [min_sources, max_sources].
  std::size_t min_sources = 1;
  std::size_t max_sources = 6;
  double duration = 4.0;  // seconds of dry speech per source
  double rir_tail = 0.25;
  /// Diffuse noise is skipped entirely when false.
  bool add_noise = true;

  void validate() const;
};

struct ManifestRecord {
  std::string id;
  std::filesystem::path mix_path;                // relative to the manifest directory when written
  std::vector<std::filesystem::path> ref_paths;  // one P-channel file per active zone
  std::vector<std::size_t> zones_active;
  double rt60 = 0.0;
  double sdr_db = 0.0;
  std::array<double, 3> scene_dims{};
  std::vector<Vec3> source_positions;
};

/// One synthesized utterance, kept in memory.
struct SimulatedItem {
  ManifestRecord record;
  MultichannelSignal mix;
  std::vector<MultichannelSignal> refs;
};

/// Builds utterance `index` of `spec`. The item's RNG is seeded with
/// spec.seed XOR index, so items can be produced in any order.
SimulatedItem simulate_item(const DatasetSpec& spec, std::size_t index);

/// Writes every item as float32 WAV under `out_dir` plus `out_dir/manifest.jsonl`
/// and returns the records (paths relative to out_dir). Failures name the item.
std::vector<ManifestRecord> simulate_batch(const DatasetSpec& spec, const std::filesystem::path& out_dir);

/// Reads a manifest; relative paths are resolved against its directory.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);

std::string manifest_line(const ManifestRecord& record);

}  // namespace dualsep
