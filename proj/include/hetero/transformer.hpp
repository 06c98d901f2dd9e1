#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hetero::transformer {

// Token matrices are n×d (n tokens, d channels). Jacobians act on the
// row-wise vectorization, so token i occupies entries [i·d, (i+1)·d).

/// Row-wise √d · x̃ / ‖x̃‖ with x̃ = x(I - 11ᵀ/d); no affine part.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& X);

/// Row-wise γ ∘ x / rms(x), rms(x) = ‖x‖₂ / √d.
Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma);

/// Per-token blocks L_i = (√d/‖x̃‖)(I - x̃x̃ᵀ/‖x̃‖²)(I - 11ᵀ/d).
/// Throws std::domain_error("constant token row") when some x̃_i = 0.
std::vector<Eigen::MatrixXd> layer_norm_jacobian_blocks(const Eigen::MatrixXd& X);
Eigen::MatrixXd layer_norm_jacobian(const Eigen::MatrixXd& X);

/// Per-token blocks R_i = Diag(γ)(√d/‖x‖)(I - xxᵀ/‖x‖²).
/// Throws std::domain_error("zero token row") when some x_i = 0.
std::vector<Eigen::MatrixXd> rms_norm_jacobian_blocks(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma);
Eigen::MatrixXd rms_norm_jacobian(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma);

Eigen::MatrixXd block_diagonal(const std::vector<Eigen::MatrixXd>& blocks);

using TokenMap = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Central differences of vec(f(X)) w.r.t. vec(X), step h = 1e-6·(1 + ‖X‖_∞).
Eigen::MatrixXd finite_difference_jacobian(const TokenMap& f, const Eigen::MatrixXd& X);

/// ‖A - B‖_F / max(‖B‖_F, 1e-12).
double relative_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

enum class LnPlacement { PreLn, PostLn };

/// Pre-LN:  (J_FFN J_LN2 + I)(J_ATT J_LN1 + I)
/// Post-LN: J_LN2 (J_FFN + I) J_LN1 (J_ATT + I)
/// All factors must be square of the same size.
Eigen::MatrixXd assemble_layer_jacobian(const Eigen::MatrixXd& J_att, const Eigen::MatrixXd& J_ffn,
                                        const Eigen::MatrixXd& J_ln1, const Eigen::MatrixXd& J_ln2,
                                        LnPlacement placement);

/// Throws std::invalid_argument unless p ≥ 0 and |Σp - 1| ≤ 1e-9.
void require_simplex(const Eigen::VectorXd& p, const char* what);

/// diag(p) - ppᵀ
Eigen::MatrixXd softmax_row_jacobian(const Eigen::VectorXd& p);

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& M);

struct AttentionConfig {
  Eigen::MatrixXd W_Q;  // d×d_k
  Eigen::MatrixXd W_K;  // d×d_k
  Eigen::MatrixXd W_V;  // d×d_v

  /// Throws std::invalid_argument on inconsistent shapes for channel width d.
  void validate(Eigen::Index d) const;
};

/// softmax(X W_Q (X W_K)ᵀ / √d_k)
Eigen::MatrixXd attention_matrix(const Eigen::MatrixXd& X, const AttentionConfig& config);

/// Σ_i ‖diag(P_i) - P_i P_iᵀ‖_F²
double softmax_jacobian_sq_frobenius(const Eigen::MatrixXd& P);

struct AttentionBounds {
  double U_V = 0.0;
  double U_Q = 0.0;
  double P_frobenius = 0.0;
  double dPdM_frobenius = 0.0;
};

/// U_V = √d_v ‖P‖_F ‖X‖_F
/// U_Q = √n ‖X W_V‖_F ‖∂P/∂M‖_F ‖X‖_F ‖X W_K‖_F / √d_k
AttentionBounds attention_bounds(const Eigen::MatrixXd& X, const AttentionConfig& config, const Eigen::MatrixXd& P);

/// Rows drawn independently from the symmetric Dirichlet(1) distribution.
Eigen::MatrixXd random_row_stochastic(std::size_t n, std::size_t cols, std::uint64_t seed);

bool is_one_hot(const Eigen::MatrixXd& P, double tol = 1e-9);

struct ExtremalityReport {
  std::size_t n = 0;
  std::size_t trials = 0;
  /// Samples passing the min-row-entropy filter, on which strictness is checked.
  std::size_t strict_checked = 0;
  std::size_t violations = 0;
  /// max over trials of ‖P‖_F - √n (≤ 0 when the bound holds).
  double max_frobenius_excess = 0.0;
  /// min over trials of Σ_i‖diag(P_i) - P_iP_iᵀ‖_F² (≥ 0 when the bound holds).
  double min_jacobian_term = 0.0;
  /// min of the same term over filtered (clearly non-one-hot) samples.
  double min_jacobian_term_filtered = 0.0;
  /// Values at a one-hot matrix: ‖P‖_F (= √n) and the term (= 0).
  double onehot_frobenius = 0.0;
  double onehot_jacobian_term = 0.0;
};

/// Random n×n row-stochastic matrices versus the one-hot extremes of ‖P‖_F
/// (maximal) and Σ_i‖diag(P_i) - P_iP_iᵀ‖_F² (minimal). Trials run in
/// parallel, trial k drawing from a stream derived from (seed, k).
ExtremalityReport onehot_extremality_check(std::size_t n, std::size_t trials, std::uint64_t seed,
                                           double entropy_filter = 1e-3);

/// -Σ p log p, with 0 log 0 = 0.
double row_entropy(const Eigen::VectorXd& p);

/// For each layer, the mean over its attention matrices and their rows of
/// row entropy / log S, where S is the row length.
std::vector<double> attention_entropy_ratio(const std::vector<std::vector<Eigen::MatrixXd>>& layers);

}  // namespace hetero::transformer
