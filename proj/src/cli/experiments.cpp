#include "hetero/cli/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <system_error>

#include "hetero/cli/io.hpp"
#include "hetero/hessian.hpp"
#include "hetero/metrics.hpp"
#include "hetero/objectives.hpp"
#include "hetero/optimizers.hpp"
#include "hetero/rng.hpp"
#include "hetero/transformer.hpp"

namespace hetero::cli {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

void log(bool verbose, const std::string& msg) {
  if (verbose) std::cerr << "hetero-opt: " << msg << '\n';
}

bool param_bool(const RunConfig& cfg, const std::string& key, bool fallback) {
  if (!cfg.params.contains(key)) return fallback;
  const auto& v = cfg.params[key];
  if (!v.is_boolean()) throw ConfigError("params." + key, std::string("expected a boolean, got ") + v.type_name());
  return v.get<bool>();
}

ojson opt_json(const std::optional<double>& x) { return x ? ojson(*x) : ojson(nullptr); }

std::string join_csv(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  s += '\n';
  return s;
}

double q_norm(const TrajectoryRow& row, int q) { return q == 1 ? row.grad_l1 : row.grad_l2; }

double sign_iteration_bound(double l0, double lstar, double lambda_p, std::size_t P, double eps) {
  return 2.0 * (l0 - lstar) * lambda_p / (static_cast<double>(P) * eps * eps);
}

TrajectoryRecord run_trajectory(const RunConfig& cfg, const Objective& obj, const BlockedVector& theta0,
                                const ScheduleSpec& schedule, std::uint64_t seed, bool keep_iterates,
                                std::optional<double> stop_threshold) {
  RunOptions opts;
  opts.keep_iterates = keep_iterates;
  opts.divergence_threshold = cfg.divergence_threshold;
  if (stop_threshold) {
    const double thr = *stop_threshold;
    const int q = cfg.q;
    opts.stop_when = [thr, q](const TrajectoryRow& row) { return q_norm(row, q) <= thr; };
  }
  std::optional<StochasticConfig> stoch;
  if (cfg.batch_size) stoch = StochasticConfig{*cfg.batch_size, seed};
  return run_sequence(obj, cfg.optimizer, schedule, theta0, cfg.steps, stoch, opts);
}

std::optional<double> smallest_threshold(const RunConfig& cfg, std::size_t P) {
  if (cfg.epsilons.empty()) return std::nullopt;
  const double eps = *std::min_element(cfg.epsilons.begin(), cfg.epsilons.end());
  ComplexityMeasurement m;
  m.epsilon = eps;
  m.q = cfg.q;
  return m.threshold(P);
}

void add_trajectory_summary(ojson& s, const TrajectoryRecord& rec) {
  s["steps_requested"] = rec.steps_requested;
  s["steps_run"] = rec.steps_run();
  s["diverged"] = rec.diverged;
  s["stopped_early"] = rec.stopped_early;
  if (!rec.rows.empty()) {
    s["initial_loss"] = rec.rows.front().loss;
    s["final_loss"] = rec.rows.back().loss;
    s["final_grad_l2"] = rec.rows.back().grad_l2;
  }
}

ojson complexity_rows(const RunConfig& cfg, const std::vector<double>& norms, std::size_t P,
                      std::optional<double> bound_l0, std::optional<double> lstar, std::optional<double> lam_p) {
  ojson arr = ojson::array();
  for (double eps : cfg.epsilons) {
    const auto m = iteration_complexity(norms, P, eps, cfg.q);
    ojson e;
    e["epsilon"] = eps;
    e["threshold"] = m.threshold(P);
    e["T_epsilon"] = m.T ? ojson(*m.T) : ojson("not reached");
    e["budget"] = m.budget;
    if (bound_l0 && lstar && lam_p) e["sign_iteration_bound"] = sign_iteration_bound(*bound_l0, *lstar, *lam_p, P, eps);
    arr.push_back(e);
  }
  return arr;
}

std::optional<double> gini_of(const BlockedVector& g) {
  try {
    return gini(normalized_block_grad_norms(g));
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------

RunArtifacts quadratic_experiment(const RunConfig& cfg, bool verbose) {
  if (cfg.objective.kind != "quadratic")
    throw ConfigError("objective.kind", "experiment 'quadratic' needs a quadratic objective");
  const auto obj_ptr = build_objective(cfg.objective);
  const auto& obj = static_cast<const QuadraticObjective&>(*obj_ptr);
  const BlockedVector theta0 = initial_theta(cfg.objective, obj);
  const ScheduleSpec schedule = resolve_schedule(cfg, obj);
  const std::size_t P = obj.dim();
  const auto lam = *obj.exact_block_operator_norms(theta0);

  log(verbose, "running " + std::to_string(cfg.steps) + " steps");
  const bool stop = param_bool(cfg, "stop_at_epsilon", false);
  const auto rec = run_trajectory(cfg, obj, theta0, schedule, cfg.seeds.front(), false,
                                  stop ? smallest_threshold(cfg, P) : std::nullopt);

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "quadratic";
  s["objective"] = obj.describe();
  s["schedule"] = to_string(schedule.kind);
  s["optimizer"] = to_string(cfg.optimizer.kind);
  const double lp = lambda_P(*obj.block_spec(), lam);
  s["lambda_P"] = lp;
  s["block_lambda"] = lam;

  log(verbose, "block power iteration");
  const auto rep = block_spectral_report(obj, theta0);
  s["lambda_P_power"] = lambda_P(*obj.block_spec(), rep.lambda);

  std::vector<std::vector<double>> rows;
  for (const auto& r : rec.rows) rows.push_back(r.block_l2);
  try {
    s["lambda_G"] = lambda_G_trajectory(rows, lam);
  } catch (const std::domain_error&) {
    s["lambda_G"] = nullptr;
  }
  const auto full = full_hvp(obj, theta0);
  s["delta_D"] = delta_D_estimate(full, block_diagonal_part(full, obj.block_spec()), P).value;
  s["rho_H"] = 0.0;
  s["gini_initial"] = opt_json(gini_of(obj.gradient(theta0)));
  add_trajectory_summary(s, rec);
  if (!cfg.epsilons.empty())
    s["complexity"] = complexity_rows(cfg, rec.grad_norms(cfg.q), P, rec.rows.front().loss, 0.0, lp);
  art.files.emplace_back("trajectory.csv", trajectory_csv(rec));
  return art;
}

RunArtifacts heterogeneity_experiment(const RunConfig& cfg, bool verbose) {
  const auto obj_ptr = build_objective(cfg.objective);
  const Objective& obj = *obj_ptr;
  const BlockedVector theta0 = initial_theta(cfg.objective, obj);
  const ScheduleSpec schedule = resolve_schedule(cfg, obj);
  const std::size_t P = obj.dim();
  const std::uint64_t seed = cfg.seeds.front();

  log(verbose, "running " + std::to_string(cfg.steps) + " steps");
  const auto rec = run_trajectory(cfg, obj, theta0, schedule, seed, true, std::nullopt);

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "heterogeneity";
  s["objective"] = obj.describe();

  log(verbose, "block spectra at theta0");
  PowerIterationOptions pio;
  pio.seed = seed;
  const auto rep = block_spectral_report(obj, theta0, pio);
  const BlockedVector g0 = obj.gradient(theta0);
  s["lambda_P"] = lambda_P(*obj.block_spec(), rep.lambda);
  try {
    s["lambda_G_initial"] = lambda_G_pointwise(g0, rep.lambda);
  } catch (const std::domain_error&) {
    s["lambda_G_initial"] = nullptr;
  }

  // Λ_G over the trajectory, re-estimating block spectra every `stride` points.
  const std::size_t stride = param_size(cfg, "spectral_stride", std::max<std::size_t>(1, cfg.steps / 10));
  std::vector<TrajectoryPoint> pts;
  for (std::size_t t = 0; t < rec.iterates.size(); t += stride) pts.push_back({rec.iterates[t], rec.gradients[t]});
  if (!rec.iterates.empty() && (rec.iterates.size() - 1) % stride != 0)
    pts.push_back({rec.iterates.back(), rec.gradients.back()});
  const BlockLambdaProvider provider = [&](const BlockedVector& th) {
    if (auto exact = obj.exact_block_operator_norms(th)) return *exact;
    return block_spectral_report(obj, th, pio).lambda;
  };
  try {
    s["lambda_G"] = lambda_G_trajectory(pts, provider);
  } catch (const std::domain_error&) {
    s["lambda_G"] = nullptr;
  }
  s["lambda_G_points"] = pts.size();

  const auto full = full_hvp(obj, theta0);
  s["delta_D"] = delta_D_estimate(full, block_diagonal_part(full, obj.block_spec()), P, pio).value;
  const double radius = param_double(cfg, "rho_radius", 0.5);
  if (!(radius > 0.0)) throw ConfigError("params.rho_radius", "must be positive");
  s["rho_H"] = rho_H_estimate(obj, box_region(theta0, radius), param_size(cfg, "rho_pairs", 200), seed).value;

  if (const auto* sampled = dynamic_cast<const SampledObjective*>(&obj)) {
    const std::size_t batch =
        cfg.batch_size.value_or(param_size(cfg, "noise_batch", std::max<std::size_t>(1, sampled->num_samples() / 4)));
    if (batch > sampled->num_samples()) throw ConfigError("params.noise_batch", "exceeds the number of samples");
    const auto ne = noise_constants(*sampled, theta0, batch, param_size(cfg, "noise_draws", 20), seed);
    s["sigma2"] = ne.sigma2;
    s["sigma3"] = ne.sigma3;
    s["noise_batch"] = batch;
  }

  const bool include_bias = param_bool(cfg, "include_bias", true);
  try {
    const auto h = heterogeneity_from_gradient(g0, include_bias);
    s["gini"] = h.gini;
    s["include_bias"] = include_bias;
    s["normalized_block_norms"] = h.normalized_block_norms;
    s["layers"] = h.layers;
    s["layer_ratios"] = h.layer_ratios;
  } catch (const std::domain_error&) {
    s["gini"] = nullptr;
  }
  if (!rec.gradients.empty()) s["gini_final"] = opt_json(gini_of(rec.gradients.back()));

  const auto pairs = grad_hessian_pairs(obj, theta0, rep);
  s["grad_hessian_log_correlation"] = opt_json(pairs.log_correlation);
  std::string blocks = "block,dim,grad_l2,normalized_grad,lambda,power_iterations,converged\n";
  const auto& spec = *obj.block_spec();
  for (std::size_t b = 0; b < spec.size(); ++b) {
    blocks += join_csv({spec.name(b), std::to_string(spec.dim(b)), format_double(vector_norm(g0.block(b), Norm::L2)),
                        format_double(pairs.pairs[b].grad_norm), format_double(rep.lambda[b]),
                        std::to_string(rep.iterations[b]), rep.converged[b] ? "true" : "false"});
  }
  add_trajectory_summary(s, rec);
  art.files.emplace_back("trajectory.csv", trajectory_csv(rec));
  art.files.emplace_back("blocks.csv", blocks);
  return art;
}

RunArtifacts noise_experiment(const RunConfig& cfg, bool verbose) {
  const auto obj_ptr = build_objective(cfg.objective);
  const auto& obj = static_cast<const SoftmaxLinearObjective&>(*obj_ptr);
  const BlockedVector theta0 = initial_theta(cfg.objective, obj);
  const std::size_t N = obj.num_samples();
  const std::uint64_t seed = cfg.seeds.front();

  std::vector<std::size_t> fallback;
  for (std::size_t div : {8u, 4u, 2u, 1u})
    if (N / div >= 1 && (fallback.empty() || fallback.back() != N / div)) fallback.push_back(N / div);
  const auto batches = param_sizes(cfg, "batch_sizes", fallback);
  const std::size_t draws = param_size(cfg, "draws", 20);
  if (draws < 2) throw ConfigError("params.draws", "must be at least 2");

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "noise";
  s["objective"] = obj.describe();
  s["draws"] = draws;
  std::string csv = "batch_size,sigma2,sigma3,excluded,tau\n";
  ojson rows = ojson::array();
  for (std::size_t b : batches) {
    if (b > N) throw ConfigError("params.batch_sizes", "batch size " + std::to_string(b) + " exceeds " + std::to_string(N));
    log(verbose, "noise constants at batch " + std::to_string(b));
    const auto ne = noise_constants(obj, theta0, b, draws, seed);
    csv += join_csv({std::to_string(b), format_double(ne.sigma2), format_double(ne.sigma3), std::to_string(ne.excluded),
                     format_double(ne.tau)});
    rows.push_back({{"batch_size", b}, {"sigma2", ne.sigma2}, {"sigma3", ne.sigma3}, {"excluded", ne.excluded}});
    if ((cfg.batch_size && *cfg.batch_size == b) || (!cfg.batch_size && b == batches.front())) {
      s["sigma2"] = ne.sigma2;
      s["sigma3"] = ne.sigma3;
      s["batch_size"] = b;
    }
  }
  if (!s.contains("sigma2")) {
    const auto ne = noise_constants(obj, theta0, *cfg.batch_size, draws, seed);
    s["sigma2"] = ne.sigma2;
    s["sigma3"] = ne.sigma3;
    s["batch_size"] = *cfg.batch_size;
  }
  s["by_batch"] = rows;
  art.files.emplace_back("noise.csv", csv);

  if (cfg.steps > 0) {
    const ScheduleSpec schedule = resolve_schedule(cfg, obj);
    log(verbose, "running " + std::to_string(cfg.steps) + " steps");
    const auto rec = run_trajectory(cfg, obj, theta0, schedule, seed, false, std::nullopt);
    add_trajectory_summary(s, rec);
    art.files.emplace_back("trajectory.csv", trajectory_csv(rec));
  }
  return art;
}

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

RunArtifacts jacobian_experiment(const RunConfig& cfg, bool verbose) {
  namespace tf = transformer;
  const std::size_t instances = param_size(cfg, "instances", 10);
  const std::size_t max_n = param_size(cfg, "max_n", 4);
  const std::size_t max_d = param_size(cfg, "max_d", 8);
  if (max_d < 2) throw ConfigError("params.max_d", "must be at least 2");
  Rng rng(cfg.seeds.front());

  std::string csv = "instance,n,d,kind,rel_err\n";
  double max_ln = 0.0, max_rms = 0.0, max_null = 0.0, max_homog = 0.0, max_pre = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(max_n));
    const auto d = static_cast<Eigen::Index>(2 + rng.below(max_d - 1));
    const Eigen::MatrixXd X = gaussian_matrix(rng, n, d);
    const Eigen::VectorXd gamma = gaussian_matrix(rng, d, 1);
    const double e_ln = tf::relative_error(tf::layer_norm_jacobian(X),
                                           tf::finite_difference_jacobian([](const Eigen::MatrixXd& Y) { return tf::layer_norm(Y); }, X));
    const double e_rms = tf::relative_error(
        tf::rms_norm_jacobian(X, gamma),
        tf::finite_difference_jacobian([&](const Eigen::MatrixXd& Y) { return tf::rms_norm(Y, gamma); }, X));
    max_ln = std::max(max_ln, e_ln);
    max_rms = std::max(max_rms, e_rms);
    const std::string head = std::to_string(k) + "," + std::to_string(n) + "," + std::to_string(d) + ",";
    csv += head + "layer_norm," + format_double(e_ln) + "\n";
    csv += head + "rms_norm," + format_double(e_rms) + "\n";

    const auto blocks = tf::layer_norm_jacobian_blocks(X);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd xc = (X.row(i).array() - X.row(i).mean()).matrix().transpose();
      max_null = std::max(max_null, (blocks[static_cast<std::size_t>(i)] * Eigen::VectorXd::Ones(d)).norm());
      max_null = std::max(max_null, (blocks[static_cast<std::size_t>(i)] * xc).norm() / xc.norm());
    }

    const Eigen::Index m = n * d;
    const Eigen::MatrixXd Ja = gaussian_matrix(rng, m, m, 0.3), Jf = gaussian_matrix(rng, m, m, 0.3);
    const Eigen::MatrixXd Jln = tf::layer_norm_jacobian(X);
    const Eigen::MatrixXd post = tf::assemble_layer_jacobian(Ja, Jf, Jln, Jln, tf::LnPlacement::PostLn);
    for (double c : {0.5, 2.0}) {
      const Eigen::MatrixXd scaled = tf::assemble_layer_jacobian(Ja, Jf, c * Jln, c * Jln, tf::LnPlacement::PostLn);
      max_homog = std::max(max_homog, tf::relative_error(scaled, c * c * post));
    }
    const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(m, m);
    max_pre = std::max(max_pre, (tf::assemble_layer_jacobian(Ja, Jf, Z, Z, tf::LnPlacement::PreLn) -
                                 Eigen::MatrixXd::Identity(m, m)).norm());
  }
  log(verbose, "checked " + std::to_string(instances) + " instances");

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "jacobian_check";
  s["instances"] = instances;
  s["max_rel_err_layer_norm"] = max_ln;
  s["max_rel_err_rms_norm"] = max_rms;
  s["tolerance"] = 1e-6;
  s["within_tolerance"] = max_ln <= 1e-6 && max_rms <= 1e-6;
  s["max_null_direction_residual"] = max_null;
  s["post_ln_degree2_rel_err"] = max_homog;
  s["pre_ln_zero_ln_identity_err"] = max_pre;
  art.files.emplace_back("jacobian.csv", csv);
  return art;
}

RunArtifacts attention_experiment(const RunConfig& cfg, bool verbose) {
  namespace tf = transformer;
  const auto ns = param_sizes(cfg, "n", {2, 3, 5});
  const std::size_t trials = param_size(cfg, "trials", 10000);
  const std::uint64_t seed = cfg.seeds.front();

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "attention";
  std::string csv = "n,trials,strict_checked,violations,max_frobenius_excess,min_jacobian_term,min_jacobian_term_filtered\n";
  ojson reps = ojson::array();
  std::size_t total_violations = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    log(verbose, "extremality trials at n = " + std::to_string(ns[i]));
    const auto r = tf::onehot_extremality_check(ns[i], trials, Rng::derive(seed, i).bits());
    total_violations += r.violations;
    csv += join_csv({std::to_string(r.n), std::to_string(r.trials), std::to_string(r.strict_checked),
                     std::to_string(r.violations), format_double(r.max_frobenius_excess),
                     format_double(r.min_jacobian_term), format_double(r.min_jacobian_term_filtered)});
    reps.push_back({{"n", r.n},
                    {"trials", r.trials},
                    {"strict_checked", r.strict_checked},
                    {"violations", r.violations},
                    {"max_frobenius_excess", r.max_frobenius_excess},
                    {"min_jacobian_term_filtered", r.min_jacobian_term_filtered},
                    {"onehot_frobenius", r.onehot_frobenius},
                    {"onehot_jacobian_term", r.onehot_jacobian_term}});
  }
  s["extremality"] = reps;
  s["violations"] = total_violations;

  // Entropy ratio of softmax attention as the logit scale grows.
  const auto scales = param_doubles(cfg, "entropy_scales", {0.0, 0.25, 1.0, 4.0});
  const auto tokens = static_cast<Eigen::Index>(param_size(cfg, "tokens", 8));
  const auto width = static_cast<Eigen::Index>(param_size(cfg, "width", 16));
  const std::size_t heads = param_size(cfg, "heads", 4);
  if (tokens < 2) throw ConfigError("params.tokens", "must be at least 2");
  Rng rng = Rng::derive(seed, 1u << 20);
  std::string ent = "scale,entropy_ratio\n";
  std::vector<std::vector<Eigen::MatrixXd>> layers;
  for (double sc : scales) {
    std::vector<Eigen::MatrixXd> mats;
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::MatrixXd X = gaussian_matrix(rng, tokens, width);
      tf::AttentionConfig ac{gaussian_matrix(rng, width, width, sc / std::sqrt(static_cast<double>(width))),
                             gaussian_matrix(rng, width, width, 1.0 / std::sqrt(static_cast<double>(width))),
                             gaussian_matrix(rng, width, width, 1.0)};
      mats.push_back(tf::attention_matrix(X, ac));
    }
    layers.push_back(std::move(mats));
  }
  const auto ratios = tf::attention_entropy_ratio(layers);
  for (std::size_t i = 0; i < scales.size(); ++i) ent += format_double(scales[i]) + "," + format_double(ratios[i]) + "\n";
  s["entropy_scales"] = scales;
  s["entropy_ratios"] = ratios;
  art.files.emplace_back("attention.csv", csv);
  art.files.emplace_back("entropy.csv", ent);
  return art;
}

RunArtifacts linear_head_experiment(const RunConfig& cfg, bool verbose) {
  const std::size_t instances = param_size(cfg, "instances", 100);
  const std::size_t max_n = param_size(cfg, "max_samples", 32);
  const std::size_t max_c = param_size(cfg, "max_classes", 5);
  const std::size_t max_h = param_size(cfg, "max_features", 8);
  const double eta = param_double(cfg, "eta", 0.1);
  if (!(eta > 0.0)) throw ConfigError("params.eta", "must be positive");
  if (max_n < 2) throw ConfigError("params.max_samples", "must be at least 2");
  if (max_c < 2) throw ConfigError("params.max_classes", "must be at least 2");
  Rng rng(cfg.seeds.front());

  std::string csv = "instance,N,C,h,max_abs_err_b,max_abs_err_V,sample_wise_b_l1,full_batch_b_l1,sequential_b_l1\n";
  double worst = 0.0;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t N = 2 + rng.below(max_n - 1);
    const std::size_t C = 2 + rng.below(max_c - 1);
    const std::size_t h = 1 + rng.below(max_h);
    Eigen::MatrixXd phi = gaussian_matrix(rng, static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(h));
    std::vector<int> labels(N);
    for (auto& y : labels) y = static_cast<int>(rng.below(C));
    const SoftmaxLinearObjective obj(std::move(phi), labels, C);
    BlockedVector theta = BlockedVector::zeros(obj.block_spec());
    for (double& x : theta.values()) x = 0.1 * rng.normal();

    const auto sw = linear_head_epoch_updates(obj, theta, eta, LinearHeadMode::SampleWiseFrozen);
    const auto cf = linear_head_sample_wise_closed_form(obj, eta);
    const auto fb = linear_head_epoch_updates(obj, theta, eta, LinearHeadMode::FullBatch);
    const auto sq = linear_head_epoch_updates(obj, theta, eta, LinearHeadMode::SampleWiseSequential);
    double eb = 0.0, ev = 0.0;
    for (std::size_t i = 0; i < sw.delta_b.size(); ++i) eb = std::max(eb, std::abs(sw.delta_b[i] - cf.delta_b[i]));
    for (std::size_t i = 0; i < sw.delta_V.size(); ++i) ev = std::max(ev, std::abs(sw.delta_V[i] - cf.delta_V[i]));
    worst = std::max({worst, eb, ev});
    csv += join_csv({std::to_string(k), std::to_string(N), std::to_string(C), std::to_string(h), format_double(eb),
                     format_double(ev), format_double(vector_norm(sw.delta_b, Norm::L1)),
                     format_double(vector_norm(fb.delta_b, Norm::L1)), format_double(vector_norm(sq.delta_b, Norm::L1))});
  }
  log(verbose, "checked " + std::to_string(instances) + " instances");

  // Balanced binary labels: the per-sample bias signs cancel exactly.
  const std::size_t nb = 2 * param_size(cfg, "balanced_half", 8);
  Eigen::MatrixXd phi = gaussian_matrix(rng, static_cast<Eigen::Index>(nb), 3);
  std::vector<int> labels(nb);
  for (std::size_t i = 0; i < nb; ++i) labels[i] = static_cast<int>(i % 2);
  const SoftmaxLinearObjective bal(std::move(phi), labels, 2);
  const auto bu = linear_head_epoch_updates(bal, BlockedVector::zeros(bal.block_spec()), eta, LinearHeadMode::SampleWiseFrozen);
  const double bal_max = vector_norm(bu.delta_b, Norm::Linf);

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "linear_head";
  s["instances"] = instances;
  s["eta"] = eta;
  s["max_abs_err_closed_form"] = worst;
  s["balanced_binary_delta_b_max_abs"] = bal_max;
  art.files.emplace_back("linear_head.csv", csv);
  return art;
}

RunArtifacts complexity_experiment(const RunConfig& cfg, bool verbose) {
  const auto obj_ptr = build_objective(cfg.objective);
  const Objective& obj = *obj_ptr;
  const BlockedVector theta0 = initial_theta(cfg.objective, obj);
  const ScheduleSpec schedule = resolve_schedule(cfg, obj);
  const std::size_t P = obj.dim();
  const bool stop = param_bool(cfg, "stop_at_epsilon", true);
  const auto stop_thr = stop ? smallest_threshold(cfg, P) : std::nullopt;

  std::optional<double> lam_p;
  if (auto lam = obj.exact_block_operator_norms(theta0)) lam_p = lambda_P(*obj.block_spec(), *lam);
  const double l0 = obj.loss(theta0);

  RunArtifacts art;
  auto& s = art.summary;
  s["experiment"] = "complexity";
  s["objective"] = obj.describe();
  s["q"] = cfg.q;
  s["lambda_P"] = opt_json(lam_p);

  log(verbose, "running seed " + std::to_string(cfg.seeds.front()));
  const auto first = run_trajectory(cfg, obj, theta0, schedule, cfg.seeds.front(), false, stop_thr);
  add_trajectory_summary(s, first);
  art.files.emplace_back("trajectory.csv", trajectory_csv(first));

  const bool stochastic = cfg.batch_size.has_value();
  std::vector<std::vector<double>> runs;
  if (stochastic) {
    runs.resize(cfg.seeds.size());
    runs[0] = first.grad_norms(cfg.q);
    const auto n = static_cast<std::ptrdiff_t>(cfg.seeds.size());
    bool any_diverged = first.diverged;
#pragma omp parallel for schedule(dynamic, 1) reduction(|| : any_diverged)
    for (std::ptrdiff_t i = 1; i < n; ++i) {
      const auto rec = run_trajectory(cfg, obj, theta0, schedule, cfg.seeds[static_cast<std::size_t>(i)], false, stop_thr);
      runs[static_cast<std::size_t>(i)] = rec.grad_norms(cfg.q);
      any_diverged = any_diverged || rec.diverged;
    }
    s["any_run_diverged"] = any_diverged;
  }
  s["mode"] = stochastic ? "stochastic" : "deterministic";
  s["runs"] = stochastic ? cfg.seeds.size() : 1;

  std::string csv = "epsilon,threshold,T_epsilon,budget,runs,sign_iteration_bound\n";
  ojson arr = ojson::array();
  const auto min_val = obj.minimum_value();
  for (double eps : cfg.epsilons) {
    const auto m = stochastic ? iteration_complexity_stochastic(runs, P, eps, cfg.q)
                              : iteration_complexity(first.grad_norms(cfg.q), P, eps, cfg.q);
    std::optional<double> bound;
    if (lam_p && min_val) bound = sign_iteration_bound(l0, *min_val, *lam_p, P, eps);
    csv += join_csv({format_double(eps), format_double(m.threshold(P)), m.T ? std::to_string(*m.T) : "not reached",
                     std::to_string(m.budget), std::to_string(m.runs), bound ? format_double(*bound) : ""});
    arr.push_back({{"epsilon", eps},
                   {"threshold", m.threshold(P)},
                   {"T_epsilon", m.T ? ojson(*m.T) : ojson("not reached")},
                   {"budget", m.budget},
                   {"sign_iteration_bound", opt_json(bound)}});
  }
  s["complexity"] = arr;
  art.files.emplace_back("complexity.csv", csv);
  return art;
}

}  // namespace

RunArtifacts run_experiment(const RunConfig& cfg, bool verbose) {
  switch (cfg.experiment) {
    case Experiment::Quadratic: return quadratic_experiment(cfg, verbose);
    case Experiment::Heterogeneity: return heterogeneity_experiment(cfg, verbose);
    case Experiment::Noise: return noise_experiment(cfg, verbose);
    case Experiment::JacobianCheck: return jacobian_experiment(cfg, verbose);
    case Experiment::Attention: return attention_experiment(cfg, verbose);
    case Experiment::LinearHead: return linear_head_experiment(cfg, verbose);
    case Experiment::Complexity: return complexity_experiment(cfg, verbose);
  }
  throw std::logic_error("unknown experiment");
}

ojson make_manifest(const RunConfig& cfg, const RunArtifacts& artifacts) {
  ojson m;
  m["tool"] = "hetero-opt";
  m["experiment"] = to_string(cfg.experiment);
  m["config_hash"] = config_hash(cfg.raw);
  m["seeds"] = cfg.seeds;
  std::vector<std::string> files{"summary.json"};
  for (const auto& f : artifacts.files) files.push_back(f.first);
  std::sort(files.begin(), files.end());
  m["files"] = files;
  m["config"] = cfg.raw;
  return m;
}

namespace {

/// A directory may be replaced under --force only if it is empty or was
/// written by this tool.
void prepare_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    const bool empty = fs::is_empty(dir);
    if (!empty && !force)
      throw std::runtime_error("run directory " + dir.string() + " already exists; pass --force to overwrite");
    if (!empty && !fs::exists(dir / "manifest.json"))
      throw std::runtime_error("refusing to overwrite " + dir.string() + ": not a hetero-opt run directory");
    if (!empty) fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

}  // namespace

int run_command(const RunCommand& cmd) {
  RunConfig cfg;
  fs::path dir;
  try {
    cfg = load_config(cmd.config);
    if (cmd.out) cfg.output_dir = *cmd.out;
    if (cfg.output_dir.empty()) throw ConfigError("output_dir", "missing (set it in the config or pass --out)");
    dir = cfg.output_dir;
  } catch (const ConfigError& e) {
    std::cerr << "hetero-opt: invalid config: " << e.what() << '\n';
    return kExitConfig;
  }

  RunArtifacts art;
  try {
    art = run_experiment(cfg, cmd.verbose);
  } catch (const ConfigError& e) {
    std::cerr << "hetero-opt: invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "hetero-opt: run failed: " << e.what() << '\n';
    return kExitFailure;
  }

  try {
    prepare_run_dir(dir, cmd.force);
    for (const auto& [name, bytes] : art.files) write_file(dir / name, bytes);
    write_file(dir / "summary.json", art.summary.dump(2) + "\n");
    write_file(dir / "manifest.json", make_manifest(cfg, art).dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "hetero-opt: " << e.what() << '\n';
    return kExitFailure;
  }
  if (art.summary.contains("diverged") && art.summary["diverged"].get<bool>())
    std::cerr << "hetero-opt: run diverged; see " << (dir / "summary.json").string() << '\n';
  if (cmd.verbose) std::cerr << "hetero-opt: wrote " << dir.string() << '\n';
  return kExitOk;
}

std::string compare_runs(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw std::invalid_argument("compare: no run directories given");
  std::vector<CsvTable> tables;
  std::vector<std::string> labels, objectives;
  std::map<std::string, int> seen;
  for (const auto& d : dirs) {
    tables.push_back(parse_csv(read_file(d / "trajectory.csv")));
    std::string obj = "unknown";
    if (fs::exists(d / "summary.json")) {
      const auto sj = nlohmann::json::parse(read_file(d / "summary.json"));
      if (sj.contains("objective") && sj["objective"].is_string()) obj = sj["objective"].get<std::string>();
    }
    objectives.push_back(obj);
    std::string label = fs::path(d).lexically_normal().filename().string();
    if (label.empty()) label = fs::path(d).lexically_normal().parent_path().filename().string();
    if (int k = seen[label]++; k > 0) label += "#" + std::to_string(k + 1);
    labels.push_back(label);
  }
  std::size_t common = tables.front().rows.size();
  for (const auto& t : tables) common = std::min(common, t.rows.size());
  if (common == 0) throw std::runtime_error("compare: runs share no common steps");

  std::string out;
  if (std::adjacent_find(objectives.begin(), objectives.end(), std::not_equal_to<>()) != objectives.end()) {
    out += "# objectives differ:";
    for (std::size_t i = 0; i < labels.size(); ++i) out += " " + labels[i] + "=" + objectives[i];
    out += '\n';
  }
  for (const auto& t : tables)
    if (t.rows.size() != common) {
      out += "# truncated to " + std::to_string(common) + " common steps\n";
      break;
    }
  std::vector<std::string> header{"step"};
  for (const auto& l : labels) header.push_back(l + ":grad_l2");
  out += join_csv(header);
  for (std::size_t r = 0; r < common; ++r) {
    std::vector<std::string> row{tables.front().rows[r][tables.front().column("step")]};
    for (std::size_t i = 0; i < tables.size(); ++i) {
      if (tables[i].rows[r][tables[i].column("step")] != row[0])
        throw std::runtime_error("compare: step columns are not aligned");
      row.push_back(tables[i].rows[r][tables[i].column("grad_l2")]);
    }
    out += join_csv(row);
  }
  return out;
}

int compare_command(const std::vector<fs::path>& dirs, const fs::path& out, bool force) {
  try {
    const std::string text = compare_runs(dirs);
    if (fs::exists(out) && !force)
      throw std::runtime_error(out.string() + " already exists; pass --force to overwrite");
    write_file(out, text);
  } catch (const std::exception& e) {
    std::cerr << "hetero-opt: compare failed: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace hetero::cli
