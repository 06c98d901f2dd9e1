#include "hetero/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "hetero/rng.hpp"

namespace hetero::transformer {

namespace {

void require_tokens(const Eigen::MatrixXd& X, Eigen::Index min_d, const char* what) {
  if (X.rows() < 1 || X.cols() < min_d)
    throw std::invalid_argument(std::string(what) + ": token matrix must be n×d with n ≥ 1, d ≥ " +
                                std::to_string(min_d));
  if (!X.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

Eigen::RowVectorXd centered(const Eigen::MatrixXd& X, Eigen::Index i) {
  return X.row(i).array() - X.row(i).mean();
}

}  // namespace

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& X) {
  require_tokens(X, 2, "layer_norm");
  const double sd = std::sqrt(static_cast<double>(X.cols()));
  Eigen::MatrixXd Y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::RowVectorXd xc = centered(X, i);
    const double nrm = xc.norm();
    if (nrm == 0.0) throw std::domain_error("layer_norm: constant token row");
    Y.row(i) = sd * xc / nrm;
  }
  return Y;
}

Eigen::MatrixXd rms_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma) {
  require_tokens(X, 1, "rms_norm");
  if (gamma.size() != X.cols()) throw std::invalid_argument("rms_norm: gamma must have d entries");
  const double sd = std::sqrt(static_cast<double>(X.cols()));
  Eigen::MatrixXd Y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double nrm = X.row(i).norm();
    if (nrm == 0.0) throw std::domain_error("rms_norm: zero token row");
    Y.row(i) = (sd / nrm) * X.row(i).cwiseProduct(gamma.transpose());
  }
  return Y;
}

std::vector<Eigen::MatrixXd> layer_norm_jacobian_blocks(const Eigen::MatrixXd& X) {
  require_tokens(X, 2, "layer_norm_jacobian");
  const Eigen::Index d = X.cols();
  const double dd = static_cast<double>(d);
  const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(d, d) - Eigen::MatrixXd::Constant(d, d, 1.0 / dd);
  std::vector<Eigen::MatrixXd> blocks;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd xc = centered(X, i).transpose();
    const double n2 = xc.squaredNorm();
    if (n2 == 0.0) throw std::domain_error("layer_norm_jacobian: constant token row");
    const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(d, d) - xc * xc.transpose() / n2;
    blocks.push_back((std::sqrt(dd) / std::sqrt(n2)) * proj * C);
  }
  return blocks;
}

Eigen::MatrixXd layer_norm_jacobian(const Eigen::MatrixXd& X) { return block_diagonal(layer_norm_jacobian_blocks(X)); }

std::vector<Eigen::MatrixXd> rms_norm_jacobian_blocks(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma) {
  require_tokens(X, 1, "rms_norm_jacobian");
  if (gamma.size() != X.cols()) throw std::invalid_argument("rms_norm_jacobian: gamma must have d entries");
  const Eigen::Index d = X.cols();
  const double sd = std::sqrt(static_cast<double>(d));
  std::vector<Eigen::MatrixXd> blocks;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    const double n2 = x.squaredNorm();
    if (n2 == 0.0) throw std::domain_error("rms_norm_jacobian: zero token row");
    const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(d, d) - x * x.transpose() / n2;
    blocks.push_back(gamma.asDiagonal() * ((sd / std::sqrt(n2)) * proj));
  }
  return blocks;
}

Eigen::MatrixXd rms_norm_jacobian(const Eigen::MatrixXd& X, const Eigen::VectorXd& gamma) {
  return block_diagonal(rms_norm_jacobian_blocks(X, gamma));
}

Eigen::MatrixXd block_diagonal(const std::vector<Eigen::MatrixXd>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

Eigen::MatrixXd finite_difference_jacobian(const TokenMap& f, const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), d = X.cols();
  const double h = 1e-6 * (1.0 + X.cwiseAbs().maxCoeff());
  const Eigen::MatrixXd Y0 = f(X);
  Eigen::MatrixXd J(Y0.size(), n * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::MatrixXd Xp = X, Xm = X;
      Xp(i, j) += h;
      Xm(i, j) -= h;
      const Eigen::MatrixXd D = (f(Xp) - f(Xm)) / (2.0 * h);
      for (Eigen::Index a = 0; a < D.rows(); ++a)
        for (Eigen::Index b = 0; b < D.cols(); ++b) J(a * D.cols() + b, i * d + j) = D(a, b);
    }
  }
  return J;
}

double relative_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw std::invalid_argument("relative_error: shape mismatch");
  // A vanishing reference (d = 2 layer norm) is compared in absolute terms.
  const double ref = B.norm();
  return (A - B).norm() / (ref > 1e-6 ? ref : 1.0);
}

Eigen::MatrixXd assemble_layer_jacobian(const Eigen::MatrixXd& J_att, const Eigen::MatrixXd& J_ffn,
                                        const Eigen::MatrixXd& J_ln1, const Eigen::MatrixXd& J_ln2,
                                        LnPlacement placement) {
  const Eigen::Index m = J_att.rows();
  for (const auto* J : {&J_att, &J_ffn, &J_ln1, &J_ln2})
    if (J->rows() != m || J->cols() != m)
      throw std::invalid_argument("assemble_layer_jacobian: all factors must be nd×nd of equal size");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  if (placement == LnPlacement::PreLn) return (J_ffn * J_ln2 + I) * (J_att * J_ln1 + I);
  return J_ln2 * (J_ffn + I) * J_ln1 * (J_att + I);
}

void require_simplex(const Eigen::VectorXd& p, const char* what) {
  if (p.size() < 1) throw std::invalid_argument(std::string(what) + ": empty probability vector");
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (!(p(i) >= 0.0) || !std::isfinite(p(i)))
      throw std::invalid_argument(std::string(what) + ": probability vector has a negative or non-finite entry");
  if (std::abs(p.sum() - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + ": probabilities must sum to 1");
}

Eigen::MatrixXd softmax_row_jacobian(const Eigen::VectorXd& p) {
  require_simplex(p, "softmax_row_jacobian");
  Eigen::MatrixXd J = -p * p.transpose();
  J.diagonal() += p;
  return J;
}

Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& M) {
  Eigen::MatrixXd P(M.rows(), M.cols());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const Eigen::RowVectorXd e = (M.row(i).array() - M.row(i).maxCoeff()).exp();
    P.row(i) = e / e.sum();
  }
  return P;
}

void AttentionConfig::validate(Eigen::Index d) const {
  if (W_Q.rows() != d || W_K.rows() != d || W_V.rows() != d)
    throw std::invalid_argument("attention: projection matrices must have d rows");
  if (W_Q.cols() < 1 || W_Q.cols() != W_K.cols()) throw std::invalid_argument("attention: W_Q and W_K must be d×d_k");
  if (W_V.cols() < 1) throw std::invalid_argument("attention: W_V must be d×d_v with d_v ≥ 1");
}

Eigen::MatrixXd attention_matrix(const Eigen::MatrixXd& X, const AttentionConfig& config) {
  config.validate(X.cols());
  const double sk = std::sqrt(static_cast<double>(config.W_K.cols()));
  const Eigen::MatrixXd M = (X * config.W_Q) * (X * config.W_K).transpose() / sk;
  return row_softmax(M);
}

double softmax_jacobian_sq_frobenius(const Eigen::MatrixXd& P) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) s += softmax_row_jacobian(P.row(i).transpose()).squaredNorm();
  return s;
}

AttentionBounds attention_bounds(const Eigen::MatrixXd& X, const AttentionConfig& config, const Eigen::MatrixXd& P) {
  config.validate(X.cols());
  if (P.rows() != X.rows() || P.cols() != X.rows()) throw std::invalid_argument("attention_bounds: P must be n×n");
  AttentionBounds b;
  b.P_frobenius = P.norm();
  b.dPdM_frobenius = std::sqrt(softmax_jacobian_sq_frobenius(P));
  const double xf = X.norm();
  const double n = static_cast<double>(X.rows());
  b.U_V = std::sqrt(static_cast<double>(config.W_V.cols())) * b.P_frobenius * xf;
  b.U_Q = std::sqrt(n) * (X * config.W_V).norm() * b.dPdM_frobenius * xf * (X * config.W_K).norm() /
          std::sqrt(static_cast<double>(config.W_K.cols()));
  return b;
}

Eigen::MatrixXd random_row_stochastic(std::size_t n, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) P(i, j) = rng.exponential();
    P.row(i) /= P.row(i).sum();
  }
  return P;
}

bool is_one_hot(const Eigen::MatrixXd& P, double tol) {
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    if (std::abs(P.row(i).maxCoeff() - 1.0) > tol) return false;
  return true;
}

double row_entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return h;
}

ExtremalityReport onehot_extremality_check(std::size_t n, std::size_t trials, std::uint64_t seed,
                                           double entropy_filter) {
  if (n < 1) throw std::invalid_argument("onehot_extremality_check: n must be positive");
  if (trials < 1) throw std::invalid_argument("onehot_extremality_check: trials must be at least 1");
  ExtremalityReport rep;
  rep.n = n;
  rep.trials = trials;
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < onehot.rows(); ++i) onehot(i, i % onehot.cols()) = 1.0;
  rep.onehot_frobenius = onehot.norm();
  rep.onehot_jacobian_term = softmax_jacobian_sq_frobenius(onehot);

  double excess = -std::numeric_limits<double>::infinity();
  double min_term = std::numeric_limits<double>::infinity();
  double min_filtered = std::numeric_limits<double>::infinity();
  std::size_t violations = 0, checked = 0;
  const auto count = static_cast<std::ptrdiff_t>(trials);
#pragma omp parallel for schedule(static) reduction(max : excess) reduction(min : min_term, min_filtered) \
    reduction(+ : violations, checked)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const Eigen::MatrixXd P = random_row_stochastic(n, n, Rng::derive(seed, static_cast<std::uint64_t>(k)).bits());
    const double frob = P.norm();
    const double term = softmax_jacobian_sq_frobenius(P);
    excess = std::max(excess, frob - sqrt_n);
    min_term = std::min(min_term, term);
    if (frob > sqrt_n + 1e-9 || term < 0.0) ++violations;
    double min_h = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < P.rows(); ++i) min_h = std::min(min_h, row_entropy(P.row(i).transpose()));
    if (min_h > entropy_filter) {
      ++checked;
      min_filtered = std::min(min_filtered, term);
      if (!(term > 0.0) || !(frob < sqrt_n)) ++violations;
    }
  }
  rep.max_frobenius_excess = excess;
  rep.min_jacobian_term = min_term;
  rep.min_jacobian_term_filtered = checked > 0 ? min_filtered : 0.0;
  rep.violations = violations;
  rep.strict_checked = checked;
  return rep;
}

std::vector<double> attention_entropy_ratio(const std::vector<std::vector<Eigen::MatrixXd>>& layers) {
  std::vector<double> out;
  for (const auto& mats : layers) {
    if (mats.empty()) throw std::invalid_argument("attention_entropy_ratio: layer without attention matrices");
    double sum = 0.0;
    std::size_t rows = 0;
    for (const auto& A : mats) {
      if (A.cols() < 2) throw std::invalid_argument("attention_entropy_ratio: rows need at least two entries");
      const double logS = std::log(static_cast<double>(A.cols()));
      for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const Eigen::VectorXd p = A.row(i).transpose();
        require_simplex(p, "attention_entropy_ratio");
        sum += row_entropy(p) / logS;
        ++rows;
      }
    }
    if (rows == 0) throw std::invalid_argument("attention_entropy_ratio: empty attention matrices");
    out.push_back(sum / static_cast<double>(rows));
  }
  return out;
}

}  // namespace hetero::transformer
