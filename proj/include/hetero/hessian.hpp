#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hetero/core.hpp"
#include "hetero/objectives.hpp"
#include "hetero/rng.hpp"

namespace hetero {

/// y = A x for a symmetric operator A of fixed dimension.
using LinearOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct PowerIterationOptions {
  std::size_t max_iters = 100000;
  /// Relative tolerance on the estimated distance to the limit.
  double tol = 1e-9;
  std::uint64_t seed = 0;
  bool record_history = false;
};

struct PowerIterationResult {
  /// Operator-norm estimate ‖A v_k‖ for the final unit iterate v_k.
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Relative error estimate at termination.
  double achieved_tol = 0.0;
  /// Per-iteration ‖A v_k‖ and Rayleigh quotient v_kᵀ A v_k (if requested).
  std::vector<double> norm_history;
  std::vector<double> rayleigh_history;
};

/// Dominant |eigenvalue| of a symmetric operator by power iteration.
///
/// The estimate at iteration k is ‖A v_k‖ with ‖v_k‖ = 1. For symmetric A this
/// sequence is non-decreasing and converges to the spectral norm even when
/// ±λ_max are both present. Iteration stops when either the eigen-residual
/// ‖A v - (vᵀAv) v‖ or an Aitken estimate of the remaining gap, built from
/// the last two increments, falls below tol·estimate.
PowerIterationResult power_iteration(const LinearOperator& op, std::size_t dim, const PowerIterationOptions& options = {});

/// v ↦ [∇²L(θ) ṽ]_b where ṽ is v embedded in block b and zero elsewhere.
LinearOperator block_restricted_hvp(const Objective& objective, const BlockedVector& theta, std::size_t block);

/// v ↦ ∇²L(θ) v on the full parameter space.
LinearOperator full_hvp(const Objective& objective, const BlockedVector& theta);

/// v ↦ Σ_b E_b [A E_b v_b]_b, the block-diagonal part of `full`.
LinearOperator block_diagonal_part(const LinearOperator& full, const BlockSpecPtr& spec);

struct BlockSpectralReport {
  std::vector<std::string> names;
  std::vector<double> lambda;
  std::vector<std::size_t> iterations;
  std::vector<bool> converged;
  std::vector<double> achieved_tol;
  BlockedVector theta;
};

/// Per-block ‖[∇²L(θ)]_b‖₂ by power iteration. Blocks run concurrently, each
/// with its own start vector derived from (options.seed, block index).
BlockSpectralReport block_spectral_report(const Objective& objective, const BlockedVector& theta,
                                          const PowerIterationOptions& options = {});
/// Same result computed on the calling thread.
BlockSpectralReport block_spectral_report_serial(const Objective& objective, const BlockedVector& theta,
                                                 const PowerIterationOptions& options = {});

/// Σ_b (P_b / P) λ_b
double lambda_P(const BlockSpec& spec, std::span<const double> lambda);

/// Σ_b (‖[g]_b‖₂² / ‖g‖₂²) λ_b. Throws std::domain_error at g = 0.
double lambda_G_pointwise(const BlockedVector& g, std::span<const double> lambda);

/// Same weighting from precomputed block ℓ2 norms.
double lambda_G_from_block_norms(std::span<const double> block_l2, std::span<const double> lambda);

struct TrajectoryPoint {
  BlockedVector theta;
  BlockedVector gradient;
};

using BlockLambdaProvider = std::function<std::vector<double>(const BlockedVector& theta)>;

/// sup_t of lambda_G_pointwise over the non-stationary points visited.
/// Throws std::domain_error if every point is stationary.
double lambda_G_trajectory(std::span<const TrajectoryPoint> points, const BlockLambdaProvider& provider);

/// Constant-Hessian shortcut: per-point block ℓ2 norms and fixed λ_b.
double lambda_G_trajectory(std::span<const std::vector<double>> block_l2_rows, std::span<const double> lambda);

/// Power-iteration estimate of ‖A - A_D‖₂ where A_D is the block-diagonal part.
PowerIterationResult delta_D_estimate(const LinearOperator& full, const LinearOperator& block_diagonal,
                                      std::size_t dim, const PowerIterationOptions& options = {});

/// Samples points of the region ρ_H is estimated over.
using RegionSampler = std::function<BlockedVector(Rng&)>;

/// Uniform samples from the box ‖θ - center‖_∞ ≤ radius.
RegionSampler box_region(BlockedVector center, double radius);

struct RhoEstimate {
  double value = 0.0;
  std::size_t pairs = 0;
};

/// Empirical lower bound on the Hessian Lipschitz constant:
/// max over sampled (θ, θ', v) of ‖(∇²L(θ) - ∇²L(θ')) v‖₂ / (‖θ - θ'‖₂ ‖v‖₂).
RhoEstimate rho_H_estimate(const Objective& objective, const RegionSampler& region, std::size_t pairs,
                           std::uint64_t seed);

}  // namespace hetero
