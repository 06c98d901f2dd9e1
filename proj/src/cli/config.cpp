#include "hetero/cli/config.hpp"

#include <cmath>
#include <fstream>

#include "hetero/cli/io.hpp"
#include "hetero/hessian.hpp"

namespace hetero::cli {

using nlohmann::json;

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Quadratic: return "quadratic";
    case Experiment::Heterogeneity: return "heterogeneity";
    case Experiment::Noise: return "noise";
    case Experiment::JacobianCheck: return "jacobian_check";
    case Experiment::Attention: return "attention";
    case Experiment::LinearHead: return "linear_head";
    case Experiment::Complexity: return "complexity";
  }
  return "unknown";
}

namespace {

const char* type_name(const json& v) { return v.type_name(); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(where.empty() ? k : where + "." + k, "unknown field");
  }
}

const json& require_object(const json& v, const std::string& field) {
  if (!v.is_object()) throw ConfigError(field, std::string("expected an object, got ") + type_name(v));
  return v;
}

double get_double(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, std::string("expected a number, got ") + type_name(v));
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
  return x;
}

std::uint64_t get_u64(const json& v, const std::string& field) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(field, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::size_t get_size(const json& v, const std::string& field, std::size_t min_value) {
  const auto x = get_u64(v, field);
  if (x < min_value) throw ConfigError(field, "must be at least " + std::to_string(min_value));
  return static_cast<std::size_t>(x);
}

bool get_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) throw ConfigError(field, std::string("expected a boolean, got ") + type_name(v));
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& field) {
  if (!v.is_string()) throw ConfigError(field, std::string("expected a string, got ") + type_name(v));
  return v.get<std::string>();
}

Experiment parse_experiment(const json& v) {
  const auto s = get_string(v, "experiment");
  for (auto e : {Experiment::Quadratic, Experiment::Heterogeneity, Experiment::Noise, Experiment::JacobianCheck,
                 Experiment::Attention, Experiment::LinearHead, Experiment::Complexity})
    if (to_string(e) == s) return e;
  throw ConfigError("experiment", "unknown experiment '" + s + "'");
}

ObjectiveConfig parse_objective(const json& v) {
  require_object(v, "objective");
  check_keys(v, "objective",
             {"kind", "setting", "eigenvalues", "seed", "samples", "features", "classes", "dim", "box", "theta0"});
  ObjectiveConfig o;
  if (v.contains("kind")) o.kind = get_string(v["kind"], "objective.kind");
  if (o.kind != "quadratic" && o.kind != "softmax" && o.kind != "cubic_well" && o.kind != "quartic")
    throw ConfigError("objective.kind", "unknown objective '" + o.kind + "'");
  if (v.contains("seed")) o.seed = get_u64(v["seed"], "objective.seed");

  if (o.kind == "quadratic") {
    const std::string setting = v.contains("setting") ? get_string(v["setting"], "objective.setting") : "hetero";
    if (setting == "homo") o.setting = QuadraticSetting::Homo;
    else if (setting == "hetero") o.setting = QuadraticSetting::Hetero;
    else if (setting == "custom") o.setting = QuadraticSetting::Custom;
    else throw ConfigError("objective.setting", "expected homo, hetero or custom");
    if (o.setting == QuadraticSetting::Custom) {
      if (!v.contains("eigenvalues")) throw ConfigError("objective.eigenvalues", "required for setting 'custom'");
      const auto& ev = v["eigenvalues"];
      if (!ev.is_array() || ev.empty()) throw ConfigError("objective.eigenvalues", "expected a non-empty list of lists");
      for (std::size_t b = 0; b < ev.size(); ++b) {
        const std::string f = "objective.eigenvalues[" + std::to_string(b) + "]";
        if (!ev[b].is_array() || ev[b].empty()) throw ConfigError(f, "expected a non-empty list of numbers");
        std::vector<double> block;
        for (std::size_t i = 0; i < ev[b].size(); ++i) {
          const double x = get_double(ev[b][i], f + "[" + std::to_string(i) + "]");
          if (x < 0.0) throw ConfigError(f, "eigenvalues must be nonnegative");
          block.push_back(x);
        }
        o.eigenvalues.push_back(std::move(block));
      }
    } else if (v.contains("eigenvalues")) {
      throw ConfigError("objective.eigenvalues", "only allowed with setting 'custom'");
    }
  }
  if (o.kind == "softmax") {
    if (v.contains("samples")) o.samples = get_size(v["samples"], "objective.samples", 1);
    if (v.contains("features")) o.features = get_size(v["features"], "objective.features", 1);
    if (v.contains("classes")) o.classes = get_size(v["classes"], "objective.classes", 2);
  }
  if (o.kind == "cubic_well" || o.kind == "quartic") {
    if (v.contains("dim")) o.dim = get_size(v["dim"], "objective.dim", 1);
    if (v.contains("box")) {
      o.box = get_double(v["box"], "objective.box");
      if (!(o.box > 0.0)) throw ConfigError("objective.box", "must be positive");
    }
  }
  if (v.contains("theta0")) {
    const auto& t = v["theta0"];
    if (t.is_string()) {
      if (t.get<std::string>() != "sphere") throw ConfigError("objective.theta0", "expected a number, a list or \"sphere\"");
      o.theta0_sphere = true;
    } else if (t.is_number()) {
      o.theta0_fill = get_double(t, "objective.theta0");
    } else if (t.is_array()) {
      std::vector<double> x;
      for (std::size_t i = 0; i < t.size(); ++i)
        x.push_back(get_double(t[i], "objective.theta0[" + std::to_string(i) + "]"));
      o.theta0 = std::move(x);
    } else {
      throw ConfigError("objective.theta0", "expected a number, a list or \"sphere\"");
    }
  }
  return o;
}

OptimizerConfig parse_optimizer(const json& v) {
  require_object(v, "optimizer");
  check_keys(v, "optimizer",
             {"kind", "beta", "heavy_ball", "beta1", "beta2", "eps", "eps_outside_sqrt", "alpha", "clip"});
  OptimizerConfig o;
  if (!v.contains("kind")) throw ConfigError("optimizer.kind", "missing");
  try {
    o.kind = optimizer_kind_from_string(get_string(v["kind"], "optimizer.kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("optimizer.kind", e.what());
  }
  const auto unit = [&](const char* key, double& dst) {
    if (!v.contains(key)) return;
    dst = get_double(v[key], std::string("optimizer.") + key);
    if (!(dst >= 0.0 && dst < 1.0)) throw ConfigError(std::string("optimizer.") + key, "must lie in [0, 1)");
  };
  unit("beta", o.momentum.beta);
  unit("beta1", o.adam.beta1);
  unit("beta2", o.adam.beta2);
  unit("alpha", o.rmsprop.alpha);
  if (v.contains("heavy_ball")) o.momentum.heavy_ball = get_bool(v["heavy_ball"], "optimizer.heavy_ball");
  if (v.contains("eps")) {
    const double e = get_double(v["eps"], "optimizer.eps");
    if (!(e > 0.0)) throw ConfigError("optimizer.eps", "must be positive");
    o.adam.eps = o.rmsprop.eps = e;
  }
  if (v.contains("eps_outside_sqrt"))
    o.adam.eps_outside_sqrt = o.rmsprop.eps_outside_sqrt = get_bool(v["eps_outside_sqrt"], "optimizer.eps_outside_sqrt");
  if (v.contains("clip")) {
    o.clip = get_double(v["clip"], "optimizer.clip");
    if (!(*o.clip > 0.0)) throw ConfigError("optimizer.clip", "must be positive");
  }
  return o;
}

const std::vector<std::pair<const char*, std::optional<double> ScheduleSpec::*>>& schedule_constants() {
  static const std::vector<std::pair<const char*, std::optional<double> ScheduleSpec::*>> table = {
      {"lr", &ScheduleSpec::lr},
      {"lambda_G", &ScheduleSpec::lambda_G},
      {"lambda_P", &ScheduleSpec::lambda_P},
      {"rho_H", &ScheduleSpec::rho_H},
      {"sigma2", &ScheduleSpec::sigma2},
      {"sigma3", &ScheduleSpec::sigma3},
      {"gamma", &ScheduleSpec::gamma},
      {"lambda_min", &ScheduleSpec::lambda_min},
      {"lambda_max", &ScheduleSpec::lambda_max},
  };
  return table;
}

void parse_schedule(const json& v, RunConfig& cfg) {
  require_object(v, "schedule");
  check_keys(v, "schedule",
             {"kind", "zeta", "linear_decay", "zeta_min", "lr", "lambda_G", "lambda_P", "rho_H", "sigma2", "sigma3",
              "gamma", "lambda_min", "lambda_max"});
  ScheduleSpec& s = cfg.schedule;
  if (!v.contains("kind")) throw ConfigError("schedule.kind", "missing");
  try {
    s.kind = schedule_kind_from_string(get_string(v["kind"], "schedule.kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("schedule.kind", e.what());
  }
  if (v.contains("zeta")) s.zeta = get_double(v["zeta"], "schedule.zeta");
  if (v.contains("linear_decay")) s.linear_decay = get_bool(v["linear_decay"], "schedule.linear_decay");
  if (v.contains("zeta_min")) s.zeta_min = get_double(v["zeta_min"], "schedule.zeta_min");
  for (const auto& [name, member] : schedule_constants()) {
    if (!v.contains(name)) continue;
    const auto& c = v[name];
    if (c.is_string() && c.get<std::string>() == "auto") {
      cfg.auto_constants.insert(name);
      s.*member = 1.0;  // placeholder until resolved against the objective
    } else {
      s.*member = get_double(c, std::string("schedule.") + name);
    }
  }
  if (!(s.zeta > 0.0 && s.zeta <= 1.0)) throw ConfigError("schedule.zeta", "must lie in (0, 1]");
  if (s.zeta_min && !(*s.zeta_min > 0.0 && *s.zeta_min <= s.zeta))
    throw ConfigError("schedule.zeta_min", "must lie in (0, zeta]");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto pos = msg.find("constant '");
    std::string field = "schedule";
    if (pos != std::string::npos) {
      const auto start = pos + 10;
      field += "." + msg.substr(start, msg.find('\'', start) - start);
    }
    throw ConfigError(field, msg);
  }
}

bool needs_trajectory(Experiment e) {
  return e == Experiment::Quadratic || e == Experiment::Heterogeneity || e == Experiment::Complexity;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  require_object(doc, "<root>");
  check_keys(doc, "",
             {"experiment", "description", "objective", "optimizer", "schedule", "steps", "epsilon", "q", "stochastic",
              "seeds", "output_dir", "divergence_threshold", "params"});
  RunConfig cfg;
  cfg.raw = doc;
  if (!doc.contains("experiment")) throw ConfigError("experiment", "missing");
  cfg.experiment = parse_experiment(doc["experiment"]);
  if (doc.contains("description")) get_string(doc["description"], "description");

  if (doc.contains("objective")) cfg.objective = parse_objective(doc["objective"]);

  if (!doc.contains("seeds")) throw ConfigError("seeds", "missing");
  if (!doc["seeds"].is_array() || doc["seeds"].empty()) throw ConfigError("seeds", "expected a non-empty list");
  for (std::size_t i = 0; i < doc["seeds"].size(); ++i)
    cfg.seeds.push_back(get_u64(doc["seeds"][i], "seeds[" + std::to_string(i) + "]"));

  if (doc.contains("steps")) cfg.steps = get_size(doc["steps"], "steps", 0);
  if (doc.contains("q")) {
    const auto q = get_u64(doc["q"], "q");
    if (q != 1 && q != 2) throw ConfigError("q", "must be 1 or 2");
    cfg.q = static_cast<int>(q);
  }
  if (doc.contains("epsilon")) {
    const auto& e = doc["epsilon"];
    if (e.is_array()) {
      for (std::size_t i = 0; i < e.size(); ++i) cfg.epsilons.push_back(get_double(e[i], "epsilon[" + std::to_string(i) + "]"));
    } else {
      cfg.epsilons.push_back(get_double(e, "epsilon"));
    }
    for (double x : cfg.epsilons)
      if (!(x > 0.0)) throw ConfigError("epsilon", "must be positive");
  }
  if (doc.contains("stochastic")) {
    const auto& s = require_object(doc["stochastic"], "stochastic");
    check_keys(s, "stochastic", {"batch_size"});
    if (!s.contains("batch_size")) throw ConfigError("stochastic.batch_size", "missing");
    cfg.batch_size = get_size(s["batch_size"], "stochastic.batch_size", 1);
  }
  if (doc.contains("output_dir")) cfg.output_dir = get_string(doc["output_dir"], "output_dir");
  if (doc.contains("divergence_threshold")) {
    cfg.divergence_threshold = get_double(doc["divergence_threshold"], "divergence_threshold");
    if (!(cfg.divergence_threshold > 0.0)) throw ConfigError("divergence_threshold", "must be positive");
  }
  if (doc.contains("params")) cfg.params = require_object(doc["params"], "params");

  const bool traj = needs_trajectory(cfg.experiment) || (cfg.experiment == Experiment::Noise && cfg.steps > 0);
  if (traj) {
    if (!doc.contains("optimizer")) throw ConfigError("optimizer", "missing (required by experiment '" + to_string(cfg.experiment) + "')");
    if (!doc.contains("schedule")) throw ConfigError("schedule", "missing (required by experiment '" + to_string(cfg.experiment) + "')");
    if (cfg.steps < 1) throw ConfigError("steps", "must be at least 1 for experiment '" + to_string(cfg.experiment) + "'");
  }
  if (doc.contains("optimizer")) cfg.optimizer = parse_optimizer(doc["optimizer"]);
  if (doc.contains("schedule")) {
    parse_schedule(doc["schedule"], cfg);
    cfg.has_schedule = true;
  }
  if (cfg.experiment == Experiment::Complexity && cfg.epsilons.empty())
    throw ConfigError("epsilon", "missing (required by experiment 'complexity')");
  if (cfg.experiment == Experiment::Noise && cfg.objective.kind != "softmax")
    throw ConfigError("objective.kind", "experiment 'noise' needs a finite-sum objective (softmax)");
  if (cfg.batch_size && cfg.objective.kind != "softmax")
    throw ConfigError("stochastic", "minibatching needs a finite-sum objective (softmax)");
  if (cfg.batch_size && *cfg.batch_size > cfg.objective.samples)
    throw ConfigError("stochastic.batch_size", "exceeds objective.samples");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("<file>", e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

std::string config_hash(const json& doc) { return "fnv1a64:" + hex64(fnv1a64(doc.dump())); }

std::unique_ptr<Objective> build_objective(const ObjectiveConfig& cfg) {
  if (cfg.kind == "quadratic")
    return std::make_unique<QuadraticObjective>(quadratic_eigenvalues(cfg.setting, cfg.eigenvalues), cfg.seed);
  if (cfg.kind == "softmax")
    return std::make_unique<SoftmaxLinearObjective>(
        SoftmaxLinearObjective::synthetic(cfg.samples, cfg.features, cfg.classes, cfg.seed));
  return std::make_unique<SmoothTestFunction>(make_smooth_test_function(cfg.kind, cfg.dim, cfg.box));
}

BlockedVector initial_theta(const ObjectiveConfig& cfg, const Objective& objective) {
  if (cfg.theta0_sphere) return unit_sphere_point(objective.block_spec(), cfg.seed);
  if (!cfg.theta0) return BlockedVector::filled(objective.block_spec(), cfg.theta0_fill);
  if (cfg.theta0->size() != objective.dim())
    throw ConfigError("objective.theta0", "expected " + std::to_string(objective.dim()) + " entries, got " +
                                              std::to_string(cfg.theta0->size()));
  return BlockedVector(objective.block_spec(), *cfg.theta0);
}

ScheduleSpec resolve_schedule(const RunConfig& cfg, const Objective& objective) {
  ScheduleSpec s = cfg.schedule;
  const auto* quad = dynamic_cast<const QuadraticObjective*>(&objective);
  const auto* smooth = dynamic_cast<const SmoothTestFunction*>(&objective);
  for (const auto& name : cfg.auto_constants) {
    const std::string field = "schedule." + name;
    if (name == "rho_H" && quad) {
      s.rho_H = 0.0;
    } else if (name == "rho_H" && smooth) {
      s.rho_H = smooth->rho_H_bound();
    } else if (quad && (name == "lambda_P" || name == "lambda_G" || name == "lambda_min" || name == "lambda_max")) {
      const BlockedVector probe = BlockedVector::zeros(quad->block_spec());
      const auto lam = *quad->exact_block_operator_norms(probe);
      if (name == "lambda_P") s.lambda_P = lambda_P(*quad->block_spec(), lam);
      // sup of the gradient-weighted average over any region is at most max_b λ_b
      if (name == "lambda_G") s.lambda_G = quad->lambda_max();
      if (name == "lambda_min") s.lambda_min = quad->lambda_min();
      if (name == "lambda_max") s.lambda_max = quad->lambda_max();
    } else {
      throw ConfigError(field, "'auto' is not available for objective '" + cfg.objective.kind + "'");
    }
  }
  return s;
}

namespace {

const json* find_param(const RunConfig& cfg, const std::string& key) {
  return cfg.params.contains(key) ? &cfg.params[key] : nullptr;
}

}  // namespace

double param_double(const RunConfig& cfg, const std::string& key, double fallback) {
  const json* v = find_param(cfg, key);
  return v ? get_double(*v, "params." + key) : fallback;
}

std::size_t param_size(const RunConfig& cfg, const std::string& key, std::size_t fallback) {
  const json* v = find_param(cfg, key);
  return v ? get_size(*v, "params." + key, 1) : fallback;
}

std::vector<std::size_t> param_sizes(const RunConfig& cfg, const std::string& key, std::vector<std::size_t> fallback) {
  const json* v = find_param(cfg, key);
  if (!v) return fallback;
  if (!v->is_array() || v->empty()) throw ConfigError("params." + key, "expected a non-empty list");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v->size(); ++i)
    out.push_back(get_size((*v)[i], "params." + key + "[" + std::to_string(i) + "]", 1));
  return out;
}

std::vector<double> param_doubles(const RunConfig& cfg, const std::string& key, std::vector<double> fallback) {
  const json* v = find_param(cfg, key);
  if (!v) return fallback;
  if (!v->is_array() || v->empty()) throw ConfigError("params." + key, "expected a non-empty list");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i)
    out.push_back(get_double((*v)[i], "params." + key + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace hetero::cli
