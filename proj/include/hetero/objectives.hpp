#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetero/core.hpp"

namespace hetero {

/// Differentiable training loss with exact gradient and Hessian-vector product.
/// Implementations are immutable after construction and safe to evaluate
/// concurrently.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual const BlockSpecPtr& block_spec() const = 0;
  virtual double loss(const BlockedVector& theta) const = 0;
  virtual BlockedVector gradient(const BlockedVector& theta) const = 0;
  virtual BlockedVector hvp(const BlockedVector& theta, const BlockedVector& v) const = 0;

  /// ‖[∇²L(θ)]_b‖₂ per block when known in closed form.
  virtual std::optional<std::vector<double>> exact_block_operator_norms(const BlockedVector&) const {
    return std::nullopt;
  }
  /// L* when known.
  virtual std::optional<double> minimum_value() const { return std::nullopt; }

  /// Short human-readable identity, recorded in run summaries.
  virtual std::string describe() const = 0;

  std::size_t dim() const { return block_spec()->total_dim(); }
};

/// Finite-sum objective L = (1/N) Σ_i ℓ_i that can be evaluated on a subset.
class SampledObjective : public Objective {
 public:
  virtual std::size_t num_samples() const = 0;
  virtual double loss(const BlockedVector& theta, std::span<const std::size_t> samples) const = 0;
  /// Mean gradient over `samples`. Throws std::invalid_argument on an empty
  /// or out-of-range subset.
  virtual BlockedVector gradient(const BlockedVector& theta, std::span<const std::size_t> samples) const = 0;

  using Objective::gradient;
  using Objective::loss;
};

// ---------------------------------------------------------------------------
// Block-diagonal quadratic L(θ) = ½ θᵀ H θ, H = blockdiag(Q_b Λ_b Q_bᵀ).

enum class QuadraticSetting { Homo, Hetero, Custom };

class QuadraticObjective final : public Objective {
 public:
  /// One eigenvalue list per block; block b gets dimension eigenvalues[b].size().
  /// Each Q_b is the sign-fixed Q factor of a seeded standard Gaussian matrix.
  QuadraticObjective(std::vector<std::vector<double>> eigenvalues, std::uint64_t seed);

  const BlockSpecPtr& block_spec() const override { return spec_; }
  double loss(const BlockedVector& theta) const override;
  BlockedVector gradient(const BlockedVector& theta) const override;
  BlockedVector hvp(const BlockedVector& theta, const BlockedVector& v) const override;
  std::optional<std::vector<double>> exact_block_operator_norms(const BlockedVector&) const override;
  std::optional<double> minimum_value() const override { return 0.0; }
  std::string describe() const override;

  const Eigen::MatrixXd& block_hessian(std::size_t b) const { return hessians_.at(b); }
  const Eigen::MatrixXd& block_orthogonal(std::size_t b) const { return orthogonals_.at(b); }
  const std::vector<double>& eigenvalues(std::size_t b) const { return eigenvalues_.at(b); }
  double lambda_min() const;
  double lambda_max() const;
  /// Dense assembled H (tests and inspection only).
  Eigen::MatrixXd dense_hessian() const;

 private:
  BlockedVector apply(const BlockedVector& v) const;

  BlockSpecPtr spec_;
  std::vector<std::vector<double>> eigenvalues_;
  std::vector<Eigen::MatrixXd> orthogonals_;
  std::vector<Eigen::MatrixXd> hessians_;
  std::uint64_t seed_;
};

/// Eigenvalue lists of the two presets; Custom uses `custom`.
std::vector<std::vector<double>> quadratic_eigenvalues(QuadraticSetting setting,
                                                       const std::vector<std::vector<double>>& custom = {});

QuadraticObjective build_quadratic(QuadraticSetting setting, std::uint64_t seed,
                                   const std::vector<std::vector<double>>& custom = {});

struct LossAndGradient {
  double loss;
  BlockedVector gradient;
};

LossAndGradient quad_eval(const QuadraticObjective& obj, const BlockedVector& theta);

/// Sign-fixed (R_ii > 0) orthogonal factor of a dim×dim standard Gaussian draw.
Eigen::MatrixXd seeded_orthogonal(std::size_t dim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// General symmetric quadratic with an arbitrary block partition. Used where the
// Hessian must have off-diagonal coupling between blocks.

class DenseQuadraticObjective final : public Objective {
 public:
  DenseQuadraticObjective(BlockSpecPtr spec, Eigen::MatrixXd hessian);

  const BlockSpecPtr& block_spec() const override { return spec_; }
  double loss(const BlockedVector& theta) const override;
  BlockedVector gradient(const BlockedVector& theta) const override;
  BlockedVector hvp(const BlockedVector& theta, const BlockedVector& v) const override;
  std::optional<double> minimum_value() const override;
  std::string describe() const override { return "dense_quadratic"; }

  const Eigen::MatrixXd& hessian() const { return hessian_; }

 private:
  BlockSpecPtr spec_;
  Eigen::MatrixXd hessian_;
};

// ---------------------------------------------------------------------------
// Linear softmax head f(x) = V φ(x) + b trained with mean cross-entropy.
// Parameters are two blocks: "V" (C×h, row-major, V[k][l] at k*h + l) and "b" (C).

class SoftmaxLinearObjective final : public SampledObjective {
 public:
  /// `features` is N×h; `labels` are 0-based class indices in [0, C).
  SoftmaxLinearObjective(Eigen::MatrixXd features, std::vector<int> labels, std::size_t num_classes);

  /// Φ i.i.d. standard normal from `seed`; labels round-robin (i mod C).
  static SoftmaxLinearObjective synthetic(std::size_t n, std::size_t h, std::size_t num_classes, std::uint64_t seed);

  const BlockSpecPtr& block_spec() const override { return spec_; }
  std::size_t num_samples() const override { return static_cast<std::size_t>(features_.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(features_.cols()); }
  std::size_t num_classes() const { return classes_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  double loss(const BlockedVector& theta) const override;
  double loss(const BlockedVector& theta, std::span<const std::size_t> samples) const override;
  BlockedVector gradient(const BlockedVector& theta) const override;
  BlockedVector gradient(const BlockedVector& theta, std::span<const std::size_t> samples) const override;
  BlockedVector hvp(const BlockedVector& theta, const BlockedVector& v) const override;
  std::optional<double> minimum_value() const override { return 0.0; }
  std::string describe() const override;

  /// ∇ℓ_i(θ) for one sample.
  BlockedVector sample_gradient(const BlockedVector& theta, std::size_t i) const;
  /// softmax(Vφ_i + b).
  Eigen::VectorXd probabilities(const BlockedVector& theta, std::size_t i) const;

  /// Serial per-sample loop; reference for the chunked OpenMP gradient.
  BlockedVector gradient_serial(const BlockedVector& theta, std::span<const std::size_t> samples) const;

  std::size_t bias_block() const { return 1; }
  std::size_t weight_block() const { return 0; }

 private:
  void check_samples(std::span<const std::size_t> samples) const;
  void accumulate_sample(const BlockedVector& theta, std::size_t i, double weight, std::span<double> out) const;

  Eigen::MatrixXd features_;
  std::vector<int> labels_;
  std::size_t classes_;
  BlockSpecPtr spec_;
  std::vector<std::size_t> all_;
};

/// Softmax gradient of the chosen sample set; `samples` empty means all.
BlockedVector softmax_ce_grad(const SoftmaxLinearObjective& obj, const BlockedVector& theta,
                              std::span<const std::size_t> samples = {});

// ---------------------------------------------------------------------------
// Smooth scalar-sum test functions with a known Hessian-Lipschitz bound on the
// box ‖θ‖_∞ ≤ box.

class SmoothTestFunction final : public Objective {
 public:
  enum class Kind { CubicWell, Quartic };

  SmoothTestFunction(Kind kind, std::size_t dim, double box = 1.0);

  const BlockSpecPtr& block_spec() const override { return spec_; }
  double loss(const BlockedVector& theta) const override;
  BlockedVector gradient(const BlockedVector& theta) const override;
  BlockedVector hvp(const BlockedVector& theta, const BlockedVector& v) const override;
  std::string describe() const override;

  Kind kind() const { return kind_; }
  double box() const { return box_; }
  /// Upper bound on the Hessian Lipschitz constant over the box.
  double rho_H_bound() const;

 private:
  Kind kind_;
  double box_;
  BlockSpecPtr spec_;
};

/// Throws std::invalid_argument("unknown test function: ...") for other names.
SmoothTestFunction make_smooth_test_function(const std::string& name, std::size_t dim, double box = 1.0);

struct SmoothEvaluation {
  double loss;
  BlockedVector gradient;
  BlockedVector hvp;
  double rho_H_bound;
};

SmoothEvaluation smooth_test_function(const std::string& name, const BlockedVector& theta, const BlockedVector& v,
                                      double box = 1.0);

}  // namespace hetero
