#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dualsep/dataset.hpp"
#include "dualsep/pipeline.hpp"

namespace dualsep {

struct BenchSettings {
  double duration = 30.0;  // seconds of audio per run
  std::size_t repeats = 3;
};

/// Everything a CLI run needs. Files and flags fill the same structure;
/// flags are applied after the file.
struct CliConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  PipelineConfig pipeline;
  DatasetSpec dataset;
  BenchSettings bench;

  /// Ties derived fields together (model shape follows layout and STFT, the
  /// dataset seed follows `seed`) and validates the result.
  void resolve();
};

/// Parses a JSON config. Unknown keys anywhere are rejected with a
/// ValidationError naming the key path; absent keys keep their defaults.
CliConfig parse_cli_config(const std::string& text, const CliConfig& base = {});
/// Reads and parses a file; IoError if it cannot be read.
CliConfig load_cli_config(const std::filesystem::path& path, const CliConfig& base = {});

/// Canonical pretty JSON of the resolved config (accepted back by parse_cli_config).
std::string to_json(const CliConfig& config);

}  // namespace dualsep
