#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetero/core.hpp"
#include "hetero/hessian.hpp"
#include "hetero/objectives.hpp"

namespace hetero {

/// Σ_i Σ_j |x_i - x_j| / (2 n² x̄), evaluated from the sorted values in
/// O(n log n). Throws std::invalid_argument on a negative or non-finite entry
/// and std::domain_error("degenerate distribution") when the mean is zero.
double gini(std::span<const double> values);

/// Blocks whose name marks them as biases ("b", "bias", "*.bias", "*_bias").
bool is_bias_block(const std::string& name);

/// (‖[g]_b‖₂ / √P_b) normalized to sum to one. `blocks` restricts the set
/// (empty = all). Throws std::domain_error when every selected block is zero.
std::vector<double> normalized_block_grad_norms(const BlockedVector& g, std::span<const std::size_t> blocks = {});

/// G_l / Σ G_l'. Throws std::domain_error on a zero total.
std::vector<double> layer_ratio(std::span<const double> layer_sums);

/// Layer of a block: the part of its name before the first '.'.
std::string layer_of(const std::string& block_name);

enum class ComplexityMode { Deterministic, Stochastic };

struct ComplexityMeasurement {
  double epsilon = 0.0;
  int q = 2;
  /// First qualifying index; empty when not reached within the budget.
  std::optional<std::size_t> T;
  /// Number of logged steps examined (the last index is budget - 1).
  std::size_t budget = 0;
  ComplexityMode mode = ComplexityMode::Deterministic;
  std::size_t runs = 1;

  double threshold(std::size_t P) const;
};

/// First t with norms[t] ≤ P^{1/q} ε, where norms are full-batch ‖∇L(θ_t)‖_q.
ComplexityMeasurement iteration_complexity(std::span<const double> norms, std::size_t P, double epsilon, int q);

/// Smallest t at which the fraction of runs with norms[s] > P^{1/q} ε for
/// every s ≤ t is at most one half. A run that ends early (a diverged run is
/// truncated) counts as still above the threshold after its last point.
ComplexityMeasurement iteration_complexity_stochastic(std::span<const std::vector<double>> runs, std::size_t P,
                                                      double epsilon, int q);

/// Runs `runner(seed)` for each seed (concurrently) and measures the ensemble.
ComplexityMeasurement iteration_complexity_ensemble(const std::function<std::vector<double>(std::uint64_t)>& runner,
                                                    std::span<const std::uint64_t> seeds, std::size_t P,
                                                    double epsilon, int q);

struct NoiseEstimate {
  double sigma2 = 0.0;
  double sigma3 = 0.0;
  /// Coordinates with |g_i| ≤ τ, left out of σ₂.
  std::size_t excluded = 0;
  double tau = 0.0;
  std::size_t draws = 0;
  std::size_t batch_size = 0;
};

/// σ₂, σ₃ estimates from explicit minibatch gradients at the same θ.
/// Throws std::domain_error when ‖g‖₂ = 0.
NoiseEstimate noise_constants(const BlockedVector& g, std::span<const BlockedVector> minibatch_grads);

/// Draws `draws` minibatches of `batch_size` samples without replacement, one
/// stream per draw derived from `seed`.
NoiseEstimate noise_constants(const SampledObjective& objective, const BlockedVector& theta, std::size_t batch_size,
                              std::size_t draws, std::uint64_t seed);

struct GradHessianPair {
  std::string block;
  double grad_norm;  // ‖[g]_b‖₂ / √P_b
  double lambda;
};

struct GradHessianExport {
  std::vector<GradHessianPair> pairs;
  /// Pearson correlation of (log grad_norm, log lambda) over blocks where both
  /// are positive; empty with fewer than two such blocks or zero variance.
  std::optional<double> log_correlation;
};

GradHessianExport grad_hessian_pairs(const Objective& objective, const BlockedVector& theta,
                                     const BlockSpectralReport& report);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct HeterogeneityReport {
  double gini = 0.0;
  std::vector<double> normalized_block_norms;
  std::vector<std::string> layers;
  std::vector<double> layer_ratios;
  std::optional<double> lambda_G;
  std::optional<double> lambda_P;
  std::optional<double> delta_D;
  std::optional<double> rho_H;
  std::optional<double> sigma2;
  std::optional<double> sigma3;
};

/// Gini, normalized block norms and layer ratios of one gradient.
/// With include_bias = false, bias blocks are dropped before normalizing.
HeterogeneityReport heterogeneity_from_gradient(const BlockedVector& g, bool include_bias = true);

}  // namespace hetero
