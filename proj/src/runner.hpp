#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace geolearn::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2, kExitCheck = 3 };

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool lower_bound = false;  // names ending in _min
  bool passed = false;
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::string error;
  std::vector<CheckResult> checks;
  std::vector<std::string> outputs;  // paths relative to the output directory
  nlohmann::json summary;
  std::filesystem::path dir;
  double wall_seconds = 0.0;
};

/// Runs a parsed experiment and writes its artifacts, config.resolved.yaml and
/// manifest.json into cfg.output.dir. Module errors are caught and recorded.
RunOutcome run_experiment(const ExperimentConfig& cfg);

/// Reads a config file (or a preset name when no such file exists), parses it
/// and runs it. Config errors return kExitConfig without touching the disk.
RunOutcome run_config_file(const std::string& path_or_preset, std::optional<std::string> out_dir = {},
                           std::optional<std::uint64_t> seed = {});

/// Text of the named preset, if shipped.
std::optional<std::string> preset_text(const std::string& name);

}  // namespace geolearn::cli
