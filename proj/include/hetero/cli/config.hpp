#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetero/objectives.hpp"
#include "hetero/optimizers.hpp"

namespace hetero::cli {

/// Invalid configuration. `field` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Experiment { Quadratic, Heterogeneity, Noise, JacobianCheck, Attention, LinearHead, Complexity };

std::string to_string(Experiment e);

struct ObjectiveConfig {
  /// quadratic | softmax | cubic_well | quartic
  std::string kind = "quadratic";
  QuadraticSetting setting = QuadraticSetting::Hetero;
  std::vector<std::vector<double>> eigenvalues;
  std::uint64_t seed = 0;
  // softmax
  std::size_t samples = 64;
  std::size_t features = 4;
  std::size_t classes = 3;
  // smooth test functions
  std::size_t dim = 2;
  double box = 1.0;
  /// θ₀: explicit vector, a uniform draw from the unit sphere (seeded by
  /// `seed`), or every coordinate set to theta0_fill.
  std::optional<std::vector<double>> theta0;
  bool theta0_sphere = false;
  double theta0_fill = 1.0;
};

struct RunConfig {
  Experiment experiment = Experiment::Quadratic;
  ObjectiveConfig objective;
  OptimizerConfig optimizer;
  ScheduleSpec schedule;
  bool has_schedule = false;
  /// Schedule constants given as "auto", filled from the objective.
  std::set<std::string> auto_constants;
  std::size_t steps = 0;
  std::vector<double> epsilons;
  int q = 2;
  std::optional<std::size_t> batch_size;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  double divergence_threshold = 1e12;
  /// Experiment-specific settings, validated by the experiment.
  nlohmann::json params = nlohmann::json::object();
  /// The parsed document, used for the manifest hash.
  nlohmann::json raw;
};

/// Parses and validates; throws ConfigError naming the field at fault.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the compact, key-sorted dump of the document.
std::string config_hash(const nlohmann::json& doc);

std::unique_ptr<Objective> build_objective(const ObjectiveConfig& cfg);
BlockedVector initial_theta(const ObjectiveConfig& cfg, const Objective& objective);

/// Replaces "auto" schedule constants with values known for `objective`.
/// Throws ConfigError when a constant cannot be derived.
ScheduleSpec resolve_schedule(const RunConfig& cfg, const Objective& objective);

// Typed access to `params` with defaults; errors name "params.<key>".
double param_double(const RunConfig& cfg, const std::string& key, double fallback);
std::size_t param_size(const RunConfig& cfg, const std::string& key, std::size_t fallback);
std::vector<std::size_t> param_sizes(const RunConfig& cfg, const std::string& key, std::vector<std::size_t> fallback);
std::vector<double> param_doubles(const RunConfig& cfg, const std::string& key, std::vector<double> fallback);

}  // namespace hetero::cli
