#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hetero/cli/config.hpp"

namespace hetero::cli {

/// Everything a run produces, held in memory until the run directory is written.
struct RunArtifacts {
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  /// (file name, contents); trajectory experiments include trajectory.csv.
  std::vector<std::pair<std::string, std::string>> files;
};

RunArtifacts run_experiment(const RunConfig& cfg, bool verbose = false);

/// Manifest for a finished run: config hash, seeds and the files written.
nlohmann::ordered_json make_manifest(const RunConfig& cfg, const RunArtifacts& artifacts);

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

struct RunCommand {
  std::filesystem::path config;
  std::optional<std::string> out;
  bool force = false;
  bool verbose = false;
};

/// Loads, runs and writes one run directory. Returns an ExitCode; messages go
/// to stderr.
int run_command(const RunCommand& cmd);

/// Aligns the grad_l2 columns of several run directories on their common steps.
std::string compare_runs(const std::vector<std::filesystem::path>& dirs);

int compare_command(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out, bool force);

}  // namespace hetero::cli
