#include "hetero/optimizers.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hetero/kernels.hpp"

namespace hetero {
namespace {

void require_positive_lr(double eta, const char* what) {
  if (!(eta > 0.0)) throw std::invalid_argument(std::string(what) + ": learning rate must be positive");
}

void require_unit_interval(double x, const char* name) {
  if (!(x >= 0.0 && x < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1)");
}

double required(const std::optional<double>& value, const char* name, ScheduleKind kind, bool allow_zero = false) {
  if (!value) throw std::invalid_argument("schedule '" + to_string(kind) + "': missing constant '" + name + "'");
  const double x = *value;
  if (!std::isfinite(x) || x < 0.0 || (!allow_zero && x == 0.0))
    throw std::invalid_argument("schedule '" + to_string(kind) + "': constant '" + name + "' must be " +
                                (allow_zero ? "nonnegative" : "positive"));
  return x;
}

// ρ_H-dependent terms: +∞ when ρ_H = 0 so that min() selects the other term.
double inv_sqrt_or_inf(double x) { return x > 0.0 ? 1.0 / std::sqrt(x) : std::numeric_limits<double>::infinity(); }

}  // namespace

OptimizerState OptimizerState::zeros(const BlockSpecPtr& spec) {
  return {0, BlockedVector::zeros(spec), BlockedVector::zeros(spec)};
}

BlockedVector gd_step(const BlockedVector& theta, const BlockedVector& g, double eta) {
  require_positive_lr(eta, "gd_step");
  require_compatible(theta, g, "gd_step");
  BlockedVector out = theta;
  kernels::axpy(-eta, g.values(), out.values());
  return out;
}

BlockedVector sign_step(const BlockedVector& theta, const BlockedVector& g, double eta) {
  require_positive_lr(eta, "sign_step");
  require_compatible(theta, g, "sign_step");
  BlockedVector out = theta;
  auto x = out.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= eta * sign(gv[i]);
  return out;
}

const BlockedVector& momentum_update(OptimizerState& state, const BlockedVector& g, const MomentumParams& params) {
  require_unit_interval(params.beta, "momentum beta");
  require_compatible(state.m, g, "momentum_update");
  auto m = state.m.values();
  auto gv = g.values();
  const double gw = params.heavy_ball ? 1.0 : 1.0 - params.beta;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = params.beta * m[i] + gw * gv[i];
  ++state.step;
  return state.m;
}

BlockedVector adam_step(OptimizerState& state, const BlockedVector& theta, const BlockedVector& g, double eta,
                        const AdamParams& params) {
  require_positive_lr(eta, "adam_step");
  require_unit_interval(params.beta1, "adam beta1");
  require_unit_interval(params.beta2, "adam beta2");
  if (!(params.eps > 0.0)) throw std::invalid_argument("adam eps must be positive");
  require_compatible(theta, g, "adam_step");
  require_compatible(state.m, g, "adam_step");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(params.beta1, t);
  const double c2 = 1.0 - std::pow(params.beta2, t);
  auto m = state.m.values();
  auto v = state.v.values();
  auto gv = g.values();
  BlockedVector out = theta;
  auto x = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * gv[i];
    v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * gv[i] * gv[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    const double denom = params.eps_outside_sqrt ? std::sqrt(vhat) + params.eps : std::sqrt(vhat + params.eps);
    x[i] -= eta * mhat / denom;
  }
  return out;
}

BlockedVector rmsprop_step(OptimizerState& state, const BlockedVector& theta, const BlockedVector& g, double eta,
                           const RmsPropParams& params) {
  require_positive_lr(eta, "rmsprop_step");
  require_unit_interval(params.alpha, "rmsprop alpha");
  if (!(params.eps > 0.0)) throw std::invalid_argument("rmsprop eps must be positive");
  require_compatible(theta, g, "rmsprop_step");
  require_compatible(state.v, g, "rmsprop_step");

  ++state.step;
  auto v = state.v.values();
  auto gv = g.values();
  BlockedVector out = theta;
  auto x = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    v[i] = params.alpha * v[i] + (1.0 - params.alpha) * gv[i] * gv[i];
    const double denom = params.eps_outside_sqrt ? std::sqrt(v[i]) + params.eps : std::sqrt(v[i] + params.eps);
    x[i] -= eta * gv[i] / denom;
  }
  return out;
}

BlockedVector sign_l1_scaled_step(const BlockedVector& theta, const BlockedVector& g, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("sign_l1_scaled_step: gamma must be positive");
  require_compatible(theta, g, "sign_l1_scaled_step");
  const double eta = gamma * vector_norm(g, Norm::L1);
  if (eta == 0.0) return theta;
  return sign_step(theta, g, eta);
}

BlockedVector clip_gradient(const BlockedVector& g, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip_gradient: threshold must be positive");
  const double n = vector_norm(g, Norm::L2);
  if (n <= threshold) return g;
  BlockedVector out = g;
  const double s = threshold / n;
  for (double& x : out.values()) x *= s;
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::TheoremGrad: return "theorem_grad";
    case ScheduleKind::TheoremSign: return "theorem_sign";
    case ScheduleKind::StochasticTheoremGrad: return "stochastic_theorem_grad";
    case ScheduleKind::StochasticTheoremSign: return "stochastic_theorem_sign";
    case ScheduleKind::NoiseAdaptedSign: return "noise_adapted_sign";
    case ScheduleKind::QuadOptimalSign: return "quad_optimal_sign";
    case ScheduleKind::QuadClassicalGd: return "quad_classical_gd";
    case ScheduleKind::L1Scaled: return "l1_scaled";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  for (auto k : {ScheduleKind::Constant, ScheduleKind::TheoremGrad, ScheduleKind::TheoremSign,
                 ScheduleKind::StochasticTheoremGrad, ScheduleKind::StochasticTheoremSign,
                 ScheduleKind::NoiseAdaptedSign, ScheduleKind::QuadOptimalSign, ScheduleKind::QuadClassicalGd,
                 ScheduleKind::L1Scaled})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

bool ScheduleSpec::uses_zeta() const {
  return kind != ScheduleKind::QuadOptimalSign && kind != ScheduleKind::QuadClassicalGd;
}

void ScheduleSpec::validate() const {
  if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("schedule: zeta must lie in (0, 1]");
  if (zeta_min && !(*zeta_min > 0.0 && *zeta_min <= zeta))
    throw std::invalid_argument("schedule: zeta_min must lie in (0, zeta]");
  switch (kind) {
    case ScheduleKind::Constant:
      required(lr, "lr", kind);
      break;
    case ScheduleKind::TheoremGrad:
      required(lambda_G, "lambda_G", kind);
      required(rho_H, "rho_H", kind, true);
      break;
    case ScheduleKind::TheoremSign:
    case ScheduleKind::StochasticTheoremSign:
      required(lambda_P, "lambda_P", kind);
      required(rho_H, "rho_H", kind, true);
      break;
    case ScheduleKind::StochasticTheoremGrad:
      required(lambda_G, "lambda_G", kind);
      required(rho_H, "rho_H", kind, true);
      required(sigma2, "sigma2", kind, true);
      required(sigma3, "sigma3", kind, true);
      break;
    case ScheduleKind::NoiseAdaptedSign: {
      required(lambda_P, "lambda_P", kind);
      required(rho_H, "rho_H", kind, true);
      const double s2 = required(sigma2, "sigma2", kind, true);
      if (!(s2 < 0.5)) throw std::invalid_argument("schedule 'noise_adapted_sign': constant 'sigma2' must be < 1/2");
      break;
    }
    case ScheduleKind::QuadOptimalSign:
      required(lambda_P, "lambda_P", kind);
      break;
    case ScheduleKind::QuadClassicalGd:
      required(lambda_min, "lambda_min", kind);
      required(lambda_max, "lambda_max", kind);
      break;
    case ScheduleKind::L1Scaled:
      required(gamma, "gamma", kind);
      break;
  }
}

double schedule_zeta(const ScheduleSpec& spec, std::size_t t, std::size_t total_steps) {
  if (!spec.linear_decay || total_steps == 0) return spec.zeta;
  const double lo = spec.zeta_min.value_or(spec.zeta);
  const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(total_steps));
  return spec.zeta + (lo - spec.zeta) * frac;
}

double schedule_lr(const ScheduleSpec& spec, const BlockedVector& g, std::size_t P, std::size_t t,
                   std::size_t total_steps) {
  spec.validate();
  if (P == 0) throw std::invalid_argument("schedule_lr: P must be positive");
  const double p = static_cast<double>(P);
  const double zeta = schedule_zeta(spec, t, total_steps);
  const auto k = spec.kind;

  switch (k) {
    case ScheduleKind::Constant:
      return zeta * *spec.lr;
    case ScheduleKind::TheoremGrad: {
      const double g2 = vector_norm(g, Norm::L2);
      return zeta * std::min(1.0 / *spec.lambda_G, inv_sqrt_or_inf(*spec.rho_H * g2));
    }
    case ScheduleKind::TheoremSign:
    case ScheduleKind::StochasticTheoremSign: {
      const double g1 = vector_norm(g, Norm::L1);
      const double rho_term = *spec.rho_H > 0.0 ? std::sqrt(g1 / (*spec.rho_H * std::pow(p, 1.5)))
                                                : std::numeric_limits<double>::infinity();
      return zeta * std::min(g1 / (*spec.lambda_P * p), rho_term);
    }
    case ScheduleKind::StochasticTheoremGrad: {
      const double g2 = vector_norm(g, Norm::L2);
      const double first = 1.0 / ((1.0 + *spec.sigma2) * *spec.lambda_G);
      const double second = 0.5 * inv_sqrt_or_inf((1.0 + *spec.sigma3) * *spec.rho_H * g2);
      return zeta * std::min(first, second);
    }
    case ScheduleKind::NoiseAdaptedSign: {
      const double g1 = vector_norm(g, Norm::L1);
      const double c = 3.0 * (1.0 - 2.0 * *spec.sigma2) * g1 / 5.0;
      const double rho_term = *spec.rho_H > 0.0 ? std::sqrt(c / (*spec.rho_H * std::pow(p, 1.5)))
                                                : std::numeric_limits<double>::infinity();
      return zeta * std::min(c / (*spec.lambda_P * p), rho_term);
    }
    case ScheduleKind::QuadOptimalSign:
      return vector_norm(g, Norm::L1) / (p * *spec.lambda_P);
    case ScheduleKind::QuadClassicalGd:
      return 2.0 / (*spec.lambda_min + *spec.lambda_max);
    case ScheduleKind::L1Scaled:
      return zeta * *spec.gamma * vector_norm(g, Norm::L1);
  }
  throw std::invalid_argument("schedule_lr: unknown kind");
}

// ---------------------------------------------------------------------------

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Gd: return "gd";
    case OptimizerKind::Sign: return "sign";
    case OptimizerKind::SignMomentum: return "sign_momentum";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::RmsProp: return "rmsprop";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  for (auto k : {OptimizerKind::Gd, OptimizerKind::Sign, OptimizerKind::SignMomentum, OptimizerKind::Adam,
                 OptimizerKind::RmsProp})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown optimizer kind '" + name + "'");
}

MinibatchSampler::MinibatchSampler(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed)
    : batch_(batch_size), rng_(seed), perm_(num_samples) {
  if (batch_size == 0 || batch_size > num_samples)
    throw std::invalid_argument("minibatch: batch size must lie in [1, " + std::to_string(num_samples) + "]");
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  reshuffle();
}

void MinibatchSampler::reshuffle() {
  rng_.shuffle(std::span<std::size_t>(perm_));
  pos_ = 0;
}

std::span<const std::size_t> MinibatchSampler::next() {
  if (pos_ + batch_ > perm_.size()) reshuffle();
  std::span<const std::size_t> out(perm_.data() + pos_, batch_);
  pos_ += batch_;
  return out;
}

std::vector<double> TrajectoryRecord::grad_norms(int q) const {
  if (q != 1 && q != 2) throw std::invalid_argument("grad_norms: q must be 1 or 2");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(q == 1 ? r.grad_l1 : r.grad_l2);
  return out;
}

TrajectoryRecord run_sequence(const Objective& objective, const OptimizerConfig& optimizer,
                              const ScheduleSpec& schedule, BlockedVector theta, std::size_t steps,
                              const std::optional<StochasticConfig>& stochastic, const RunOptions& options) {
  if (steps < 1) throw std::invalid_argument("T ≥ 1");
  schedule.validate();
  const auto& spec = objective.block_spec();
  if (!(theta.spec() == *spec)) throw std::invalid_argument("run_sequence: theta0 dimension mismatch");
  if (optimizer.clip && !(*optimizer.clip > 0.0)) throw std::invalid_argument("optimizer: clip must be positive");

  const SampledObjective* sampled = nullptr;
  std::optional<MinibatchSampler> sampler;
  if (stochastic) {
    sampled = dynamic_cast<const SampledObjective*>(&objective);
    if (!sampled) throw std::invalid_argument("run_sequence: stochastic mode needs a finite-sum objective");
    sampler.emplace(sampled->num_samples(), stochastic->batch_size, stochastic->seed);
  }

  const std::size_t P = spec->total_dim();
  TrajectoryRecord rec;
  rec.spec = spec;
  rec.steps_requested = steps;
  OptimizerState state = OptimizerState::zeros(spec);

  for (std::size_t t = 0;; ++t) {
    const double loss = objective.loss(theta);
    BlockedVector g_full = objective.gradient(theta);
    if (!std::isfinite(loss) || loss > options.divergence_threshold || !kernels::all_finite(g_full.values()) ||
        !kernels::all_finite(theta.values())) {
      rec.diverged = true;
      break;
    }

    TrajectoryRow row;
    row.step = t;
    row.loss = loss;
    row.grad_l1 = vector_norm(g_full, Norm::L1);
    row.grad_l2 = vector_norm(g_full, Norm::L2);
    row.grad_linf = vector_norm(g_full, Norm::Linf);
    for (const auto& bn : block_norms(g_full, Norm::L2)) row.block_l2.push_back(bn.value);

    if (options.keep_iterates) {
      rec.iterates.push_back(theta);
      rec.gradients.push_back(g_full);
    }

    const bool stop = options.stop_when && options.stop_when(row);
    if (t == steps || stop) {
      rec.stopped_early = stop && t < steps;
      rec.rows.push_back(std::move(row));
      break;
    }

    BlockedVector g = stochastic ? sampled->gradient(theta, sampler->next()) : std::move(g_full);
    if (optimizer.clip) g = clip_gradient(g, *optimizer.clip);

    const double eta = schedule_lr(schedule, g, P, t, steps);
    row.lr = eta;
    rec.rows.push_back(std::move(row));
    if (!std::isfinite(eta)) {
      rec.diverged = true;
      break;
    }

    switch (optimizer.kind) {
      case OptimizerKind::Gd:
        if (eta > 0.0) theta = gd_step(theta, g, eta);
        break;
      case OptimizerKind::Sign:
        if (eta > 0.0) theta = sign_step(theta, g, eta);
        break;
      case OptimizerKind::SignMomentum: {
        const BlockedVector& m = momentum_update(state, g, optimizer.momentum);
        if (eta > 0.0) theta = sign_step(theta, m, eta);
        break;
      }
      case OptimizerKind::Adam:
        if (eta > 0.0) theta = adam_step(state, theta, g, eta, optimizer.adam);
        break;
      case OptimizerKind::RmsProp:
        if (eta > 0.0) theta = rmsprop_step(state, theta, g, eta, optimizer.rmsprop);
        break;
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------

namespace {

LinearHeadUpdate split_update(const SoftmaxLinearObjective& obj, const BlockedVector& delta) {
  LinearHeadUpdate out;
  const auto v = delta.block(obj.weight_block());
  const auto b = delta.block(obj.bias_block());
  out.delta_V.assign(v.begin(), v.end());
  out.delta_b.assign(b.begin(), b.end());
  return out;
}

}  // namespace

LinearHeadUpdate linear_head_epoch_updates(const SoftmaxLinearObjective& obj, const BlockedVector& theta, double eta,
                                           LinearHeadMode mode) {
  if (!(eta > 0.0)) throw std::invalid_argument("linear_head: eta must be positive");
  const std::size_t n = obj.num_samples();
  const double per_sample = eta / static_cast<double>(n);
  BlockedVector delta = BlockedVector::zeros(obj.block_spec());
  auto d = delta.values();

  switch (mode) {
    case LinearHeadMode::SampleWiseFrozen:
      for (std::size_t i = 0; i < n; ++i) {
        const BlockedVector gi = obj.sample_gradient(theta, i);
        auto gv = gi.values();
        for (std::size_t j = 0; j < d.size(); ++j) d[j] -= per_sample * sign(gv[j]);
      }
      break;
    case LinearHeadMode::FullBatch: {
      const BlockedVector g = obj.gradient(theta);
      auto gv = g.values();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = -eta * sign(gv[j]);
      break;
    }
    case LinearHeadMode::SampleWiseSequential: {
      BlockedVector cur = theta;
      for (std::size_t i = 0; i < n; ++i) {
        const BlockedVector gi = obj.sample_gradient(cur, i);
        auto c = cur.values();
        auto gv = gi.values();
        for (std::size_t j = 0; j < c.size(); ++j) c[j] -= per_sample * sign(gv[j]);
      }
      auto c = cur.values();
      auto t0 = theta.values();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = c[j] - t0[j];
      break;
    }
  }
  return split_update(obj, delta);
}

LinearHeadUpdate linear_head_sample_wise_closed_form(const SoftmaxLinearObjective& obj, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("linear_head: eta must be positive");
  const std::size_t n = obj.num_samples();
  const std::size_t c = obj.num_classes();
  const std::size_t h = obj.num_features();
  const double scale = -eta / static_cast<double>(n);
  const auto& phi = obj.features();
  const auto& y = obj.labels();

  LinearHeadUpdate out;
  out.delta_b.assign(c, 0.0);
  out.delta_V.assign(c * h, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) sb += 1.0 - 2.0 * (y[i] == static_cast<int>(k) ? 1.0 : 0.0);
    out.delta_b[k] = scale * sb;
    for (std::size_t l = 0; l < h; ++l) {
      double other = 0.0, own = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = sign(phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)));
        (y[i] == static_cast<int>(k) ? own : other) += s;
      }
      out.delta_V[k * h + l] = scale * (other - own);
    }
  }
  return out;
}

}  // namespace hetero
