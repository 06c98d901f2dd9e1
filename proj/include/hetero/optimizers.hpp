#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetero/core.hpp"
#include "hetero/objectives.hpp"
#include "hetero/rng.hpp"

namespace hetero {

// ---------------------------------------------------------------------------
// Step rules

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// false: m̂ / √(v̂ + ε) (the form analysed here); true: m̂ / (√v̂ + ε).
  bool eps_outside_sqrt = false;
};

struct RmsPropParams {
  double alpha = 0.99;
  double eps = 1e-8;
  bool eps_outside_sqrt = false;
};

struct MomentumParams {
  double beta = 0.9;
  /// false: EMA m = βm + (1-β)g; true: heavy-ball m = βm + g.
  bool heavy_ball = false;
};

/// Per-trajectory optimizer memory. `m` is the first moment, `v` the second.
struct OptimizerState {
  std::size_t step = 0;
  BlockedVector m;
  BlockedVector v;

  static OptimizerState zeros(const BlockSpecPtr& spec);
};

/// θ - η g
BlockedVector gd_step(const BlockedVector& theta, const BlockedVector& g, double eta);

/// θ - η sign(g), sign(0) = 0
BlockedVector sign_step(const BlockedVector& theta, const BlockedVector& g, double eta);

/// Advances state.m and state.step; returns the new m.
const BlockedVector& momentum_update(OptimizerState& state, const BlockedVector& g, const MomentumParams& params);

/// Bias-corrected Adam step; advances `state`.
BlockedVector adam_step(OptimizerState& state, const BlockedVector& theta, const BlockedVector& g, double eta,
                        const AdamParams& params = {});

/// RMSProp step (no momentum, no bias correction); advances `state`.
BlockedVector rmsprop_step(OptimizerState& state, const BlockedVector& theta, const BlockedVector& g, double eta,
                           const RmsPropParams& params = {});

/// θ - γ‖g‖₁ sign(g)
BlockedVector sign_l1_scaled_step(const BlockedVector& theta, const BlockedVector& g, double gamma);

/// Rescales g to ℓ2 norm `threshold` when it is longer.
BlockedVector clip_gradient(const BlockedVector& g, double threshold);

// ---------------------------------------------------------------------------
// Learning-rate schedules

enum class ScheduleKind {
  Constant,
  TheoremGrad,
  TheoremSign,
  StochasticTheoremGrad,
  StochasticTheoremSign,
  NoiseAdaptedSign,
  QuadOptimalSign,
  QuadClassicalGd,
  L1Scaled,
};

std::string to_string(ScheduleKind kind);
/// Throws std::invalid_argument for an unknown name.
ScheduleKind schedule_kind_from_string(const std::string& name);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Constant;

  /// ζ multiplier in (0, 1]. With linear_decay, ζ_t falls linearly from
  /// `zeta` at t = 0 to `zeta_min` at t = T.
  double zeta = 1.0;
  bool linear_decay = false;
  std::optional<double> zeta_min;

  std::optional<double> lr;  // constant
  std::optional<double> lambda_G;
  std::optional<double> lambda_P;
  std::optional<double> rho_H;
  std::optional<double> sigma2;
  std::optional<double> sigma3;
  std::optional<double> gamma;
  std::optional<double> lambda_min;
  std::optional<double> lambda_max;

  /// Throws std::invalid_argument naming the first missing or invalid constant.
  void validate() const;
  bool uses_zeta() const;
};

/// ζ_t for step t of a T-step run.
double schedule_zeta(const ScheduleSpec& spec, std::size_t t, std::size_t total_steps);

/// η_t for gradient `g` in dimension P. ρ_H = 0 disables the ρ_H-dependent term.
double schedule_lr(const ScheduleSpec& spec, const BlockedVector& g, std::size_t P, std::size_t t = 0,
                   std::size_t total_steps = 0);

// ---------------------------------------------------------------------------
// Trajectories

enum class OptimizerKind { Gd, Sign, SignMomentum, Adam, RmsProp };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Gd;
  MomentumParams momentum;
  AdamParams adam;
  RmsPropParams rmsprop;
  std::optional<double> clip;
};

struct StochasticConfig {
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
};

/// Index stream for minibatches: a seeded permutation per epoch, consumed in
/// batch-sized slices without replacement. A tail shorter than the batch is
/// dropped and a new epoch begins.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t num_samples, std::size_t batch_size, std::uint64_t seed);
  std::span<const std::size_t> next();

 private:
  void reshuffle();

  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

struct TrajectoryRow {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_l1 = 0.0;
  double grad_l2 = 0.0;
  double grad_linf = 0.0;
  /// Learning rate applied at this step; empty on the final logged point.
  std::optional<double> lr;
  std::vector<double> block_l2;
};

struct TrajectoryRecord {
  BlockSpecPtr spec;
  std::vector<TrajectoryRow> rows;
  std::size_t steps_requested = 0;
  bool diverged = false;
  bool stopped_early = false;
  /// θ_t and full-batch ∇L(θ_t), filled when RunOptions::keep_iterates is set.
  std::vector<BlockedVector> iterates;
  std::vector<BlockedVector> gradients;

  std::size_t steps_run() const { return rows.empty() ? 0 : rows.size() - 1; }
  /// Full-batch gradient norms per logged point for q ∈ {1, 2}.
  std::vector<double> grad_norms(int q) const;
};

struct RunOptions {
  bool keep_iterates = false;
  /// Stop after logging a point for which this returns true.
  std::function<bool(const TrajectoryRow&)> stop_when;
  /// Loss above this (or non-finite) truncates the run with diverged = true.
  double divergence_threshold = 1e12;
};

/// Runs T steps of the configured optimizer. Logs T + 1 points (θ_0 … θ_T),
/// each with the full-batch loss and gradient norms; in stochastic mode the
/// step itself uses a minibatch gradient.
TrajectoryRecord run_sequence(const Objective& objective, const OptimizerConfig& optimizer,
                              const ScheduleSpec& schedule, BlockedVector theta0, std::size_t steps,
                              const std::optional<StochasticConfig>& stochastic = std::nullopt,
                              const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Linear-head one-epoch updates under SignSGD

enum class LinearHeadMode { SampleWiseFrozen, FullBatch, SampleWiseSequential };

struct LinearHeadUpdate {
  std::vector<double> delta_b;  // C
  std::vector<double> delta_V;  // C×h row-major
};

/// One epoch of SignSGD on the linear head starting from `theta`.
///  SampleWiseFrozen: -(η/N) Σ_i sign(∇ℓ_i(θ)), all gradients at θ.
///  FullBatch:        -η sign(∇L(θ)).
///  SampleWiseSequential: N consecutive steps of size η/N, one per sample.
LinearHeadUpdate linear_head_epoch_updates(const SoftmaxLinearObjective& obj, const BlockedVector& theta, double eta,
                                           LinearHeadMode mode);

/// Sample-wise update written in terms of labels and feature signs only.
LinearHeadUpdate linear_head_sample_wise_closed_form(const SoftmaxLinearObjective& obj, double eta);

}  // namespace hetero
