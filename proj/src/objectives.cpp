#include "hetero/objectives.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "hetero/kernels.hpp"
#include "hetero/rng.hpp"

namespace hetero {
namespace {

constexpr std::size_t kSampleChunk = 64;

// Sums per-item contributions of width `width` into one vector. Items are
// grouped in fixed chunks of kSampleChunk; chunk partials are added in chunk
// order, so the result does not depend on the number of threads.
template <typename F>
std::vector<double> accumulate_chunked(std::size_t count, std::size_t width, F&& contribute) {
  const std::size_t chunks = (count + kSampleChunk - 1) / kSampleChunk;
  std::vector<std::vector<double>> partials(chunks, std::vector<double>(width, 0.0));
  const auto n = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static) if (count >= 4 * kSampleChunk)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kSampleChunk;
    const std::size_t hi = std::min(count, lo + kSampleChunk);
    auto& acc = partials[static_cast<std::size_t>(c)];
    for (std::size_t j = lo; j < hi; ++j) contribute(j, std::span<double>(acc));
  }
  std::vector<double> total(width, 0.0);
  for (const auto& p : partials)
    for (std::size_t k = 0; k < width; ++k) total[k] += p[k];
  return total;
}

double log_sum_exp(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

void check_theta(const BlockedVector& theta, const BlockSpecPtr& spec, const char* what) {
  if (theta.size() != spec->total_dim() || !(theta.spec() == *spec))
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (expected " +
                                std::to_string(spec->total_dim()) + ", got " + std::to_string(theta.size()) + ")");
}

}  // namespace

// ---------------------------------------------------------------------------

Eigen::MatrixXd seeded_orthogonal(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

std::vector<std::vector<double>> quadratic_eigenvalues(QuadraticSetting setting,
                                                       const std::vector<std::vector<double>>& custom) {
  switch (setting) {
    case QuadraticSetting::Homo:
      return {{1, 99, 4998}, {2, 100, 4999}, {3, 101, 5000}};
    case QuadraticSetting::Hetero:
      return {{1, 2, 3}, {99, 100, 101}, {4998, 4999, 5000}};
    case QuadraticSetting::Custom:
      return custom;
  }
  throw std::invalid_argument("quadratic: unknown setting");
}

QuadraticObjective::QuadraticObjective(std::vector<std::vector<double>> eigenvalues, std::uint64_t seed)
    : eigenvalues_(std::move(eigenvalues)), seed_(seed) {
  if (eigenvalues_.empty()) throw std::invalid_argument("quadratic: at least one block required");
  std::vector<BlockSpec::Block> blocks;
  for (std::size_t b = 0; b < eigenvalues_.size(); ++b) {
    const auto& ev = eigenvalues_[b];
    if (ev.empty()) throw std::invalid_argument("quadratic: block " + std::to_string(b + 1) + " has no eigenvalues");
    for (double l : ev)
      if (!(l > 0.0) || !std::isfinite(l))
        throw std::invalid_argument("quadratic: eigenvalues must be positive (block " + std::to_string(b + 1) + ")");
    blocks.push_back({"block" + std::to_string(b + 1), ev.size()});

    const auto n = static_cast<Eigen::Index>(ev.size());
    Eigen::MatrixXd q = seeded_orthogonal(ev.size(), Rng::derive(seed, b).bits());
    Eigen::VectorXd lam = Eigen::Map<const Eigen::VectorXd>(ev.data(), n);
    Eigen::MatrixXd h = q * lam.asDiagonal() * q.transpose();
    h = (0.5 * (h + h.transpose())).eval();
    orthogonals_.push_back(std::move(q));
    hessians_.push_back(std::move(h));
  }
  spec_ = BlockSpec::make(std::move(blocks));
}

BlockedVector QuadraticObjective::apply(const BlockedVector& v) const {
  check_theta(v, spec_, "quadratic");
  BlockedVector out = BlockedVector::zeros(spec_);
  for (std::size_t b = 0; b < spec_->size(); ++b) {
    const auto n = static_cast<Eigen::Index>(spec_->dim(b));
    Eigen::Map<const Eigen::VectorXd> x(v.block(b).data(), n);
    Eigen::Map<Eigen::VectorXd> y(out.block(b).data(), n);
    y.noalias() = hessians_[b] * x;
  }
  return out;
}

double QuadraticObjective::loss(const BlockedVector& theta) const { return 0.5 * dot(theta, apply(theta)); }

BlockedVector QuadraticObjective::gradient(const BlockedVector& theta) const { return apply(theta); }

BlockedVector QuadraticObjective::hvp(const BlockedVector& theta, const BlockedVector& v) const {
  check_theta(theta, spec_, "quadratic");
  return apply(v);
}

std::optional<std::vector<double>> QuadraticObjective::exact_block_operator_norms(const BlockedVector&) const {
  std::vector<double> out;
  for (const auto& ev : eigenvalues_) out.push_back(*std::max_element(ev.begin(), ev.end()));
  return out;
}

double QuadraticObjective::lambda_min() const {
  double m = eigenvalues_[0][0];
  for (const auto& ev : eigenvalues_) m = std::min(m, *std::min_element(ev.begin(), ev.end()));
  return m;
}

double QuadraticObjective::lambda_max() const {
  double m = eigenvalues_[0][0];
  for (const auto& ev : eigenvalues_) m = std::max(m, *std::max_element(ev.begin(), ev.end()));
  return m;
}

Eigen::MatrixXd QuadraticObjective::dense_hessian() const {
  const auto n = static_cast<Eigen::Index>(spec_->total_dim());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t b = 0; b < spec_->size(); ++b) {
    const auto off = static_cast<Eigen::Index>(spec_->offset(b));
    const auto d = static_cast<Eigen::Index>(spec_->dim(b));
    h.block(off, off, d, d) = hessians_[b];
  }
  return h;
}

std::string QuadraticObjective::describe() const {
  std::string s = "quadratic(seed=" + std::to_string(seed_) + ", eigenvalues=[";
  for (std::size_t b = 0; b < eigenvalues_.size(); ++b) {
    if (b) s += ",";
    s += "[";
    for (std::size_t i = 0; i < eigenvalues_[b].size(); ++i) {
      if (i) s += ",";
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, eigenvalues_[b][i]);
      s.append(buf, r.ptr);
    }
    s += "]";
  }
  return s + "])";
}

QuadraticObjective build_quadratic(QuadraticSetting setting, std::uint64_t seed,
                                   const std::vector<std::vector<double>>& custom) {
  return QuadraticObjective(quadratic_eigenvalues(setting, custom), seed);
}

LossAndGradient quad_eval(const QuadraticObjective& obj, const BlockedVector& theta) {
  BlockedVector g = obj.gradient(theta);
  const double l = 0.5 * dot(theta, g);
  return {l, std::move(g)};
}

// ---------------------------------------------------------------------------

DenseQuadraticObjective::DenseQuadraticObjective(BlockSpecPtr spec, Eigen::MatrixXd hessian)
    : spec_(std::move(spec)), hessian_(std::move(hessian)) {
  const auto n = static_cast<Eigen::Index>(spec_->total_dim());
  if (hessian_.rows() != n || hessian_.cols() != n)
    throw std::invalid_argument("dense_quadratic: Hessian shape does not match block spec");
  if (!hessian_.isApprox(hessian_.transpose(), 1e-12)) throw std::invalid_argument("dense_quadratic: Hessian must be symmetric");
}

double DenseQuadraticObjective::loss(const BlockedVector& theta) const { return 0.5 * dot(theta, gradient(theta)); }

BlockedVector DenseQuadraticObjective::gradient(const BlockedVector& theta) const {
  return hvp(theta, theta);
}

BlockedVector DenseQuadraticObjective::hvp(const BlockedVector& theta, const BlockedVector& v) const {
  check_theta(theta, spec_, "dense_quadratic");
  check_theta(v, spec_, "dense_quadratic");
  BlockedVector out = BlockedVector::zeros(spec_);
  const auto n = static_cast<Eigen::Index>(spec_->total_dim());
  Eigen::Map<Eigen::VectorXd>(out.values().data(), n).noalias() =
      hessian_ * Eigen::Map<const Eigen::VectorXd>(v.values().data(), n);
  return out;
}

std::optional<double> DenseQuadraticObjective::minimum_value() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() >= 0.0) return 0.0;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

SoftmaxLinearObjective::SoftmaxLinearObjective(Eigen::MatrixXd features, std::vector<int> labels,
                                               std::size_t num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), classes_(num_classes) {
  if (features_.rows() == 0 || features_.cols() == 0) throw std::invalid_argument("softmax: empty feature matrix");
  if (classes_ < 2) throw std::invalid_argument("softmax: at least two classes required");
  if (labels_.size() != static_cast<std::size_t>(features_.rows()))
    throw std::invalid_argument("softmax: label count does not match feature rows");
  for (int y : labels_)
    if (y < 0 || static_cast<std::size_t>(y) >= classes_) throw std::invalid_argument("softmax: label out of range");
  spec_ = BlockSpec::make({{"V", classes_ * static_cast<std::size_t>(features_.cols())}, {"b", classes_}});
  all_.resize(labels_.size());
  for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
}

SoftmaxLinearObjective SoftmaxLinearObjective::synthetic(std::size_t n, std::size_t h, std::size_t num_classes,
                                                         std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h));
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    for (Eigen::Index l = 0; l < phi.cols(); ++l) phi(i, l) = rng.normal();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % num_classes);
  return SoftmaxLinearObjective(std::move(phi), std::move(labels), num_classes);
}

void SoftmaxLinearObjective::check_samples(std::span<const std::size_t> samples) const {
  if (samples.empty()) throw std::invalid_argument("softmax: empty sample subset");
  for (std::size_t i : samples)
    if (i >= labels_.size()) throw std::invalid_argument("softmax: sample index " + std::to_string(i) + " out of range");
}

Eigen::VectorXd SoftmaxLinearObjective::probabilities(const BlockedVector& theta, std::size_t i) const {
  const auto h = features_.cols();
  const auto c = static_cast<Eigen::Index>(classes_);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> v(
      theta.block(weight_block()).data(), c, h);
  Eigen::Map<const Eigen::VectorXd> b(theta.block(bias_block()).data(), c);
  Eigen::VectorXd z = v * features_.row(static_cast<Eigen::Index>(i)).transpose() + b;
  const double lse = log_sum_exp(z);
  return (z.array() - lse).exp();
}

void SoftmaxLinearObjective::accumulate_sample(const BlockedVector& theta, std::size_t i, double weight,
                                               std::span<double> out) const {
  const Eigen::VectorXd p = probabilities(theta, i);
  const auto h = static_cast<std::size_t>(features_.cols());
  const auto row = static_cast<Eigen::Index>(i);
  const std::size_t bias_off = classes_ * h;
  for (std::size_t k = 0; k < classes_; ++k) {
    const double delta = weight * (p(static_cast<Eigen::Index>(k)) - (static_cast<int>(k) == labels_[i] ? 1.0 : 0.0));
    for (std::size_t l = 0; l < h; ++l) out[k * h + l] += delta * features_(row, static_cast<Eigen::Index>(l));
    out[bias_off + k] += delta;
  }
}

double SoftmaxLinearObjective::loss(const BlockedVector& theta) const { return loss(theta, all_); }

double SoftmaxLinearObjective::loss(const BlockedVector& theta, std::span<const std::size_t> samples) const {
  check_theta(theta, spec_, "softmax");
  check_samples(samples);
  const auto h = features_.cols();
  const auto c = static_cast<Eigen::Index>(classes_);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> v(
      theta.block(weight_block()).data(), c, h);
  Eigen::Map<const Eigen::VectorXd> b(theta.block(bias_block()).data(), c);
  std::vector<double> per_sample(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(static) if (samples.size() >= 4 * kSampleChunk)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto i = samples[static_cast<std::size_t>(j)];
    Eigen::VectorXd z = v * features_.row(static_cast<Eigen::Index>(i)).transpose() + b;
    per_sample[static_cast<std::size_t>(j)] = log_sum_exp(z) - z(labels_[i]);
  }
  return kernels::sum(per_sample) / static_cast<double>(samples.size());
}

BlockedVector SoftmaxLinearObjective::gradient(const BlockedVector& theta) const { return gradient(theta, all_); }

BlockedVector SoftmaxLinearObjective::gradient(const BlockedVector& theta, std::span<const std::size_t> samples) const {
  check_theta(theta, spec_, "softmax");
  check_samples(samples);
  auto total = accumulate_chunked(samples.size(), spec_->total_dim(), [&](std::size_t j, std::span<double> acc) {
    accumulate_sample(theta, samples[j], 1.0, acc);
  });
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (double& x : total) x *= inv;
  return BlockedVector(spec_, std::move(total));
}

BlockedVector SoftmaxLinearObjective::gradient_serial(const BlockedVector& theta,
                                                      std::span<const std::size_t> samples) const {
  check_theta(theta, spec_, "softmax");
  check_samples(samples);
  // Same chunked summation order as gradient(), one chunk at a time.
  std::vector<double> total(spec_->total_dim(), 0.0);
  for (std::size_t lo = 0; lo < samples.size(); lo += kSampleChunk) {
    std::vector<double> acc(total.size(), 0.0);
    for (std::size_t j = lo; j < std::min(samples.size(), lo + kSampleChunk); ++j)
      accumulate_sample(theta, samples[j], 1.0, acc);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += acc[k];
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (double& x : total) x *= inv;
  return BlockedVector(spec_, std::move(total));
}

BlockedVector SoftmaxLinearObjective::sample_gradient(const BlockedVector& theta, std::size_t i) const {
  const std::size_t one[] = {i};
  return gradient_serial(theta, one);
}

BlockedVector SoftmaxLinearObjective::hvp(const BlockedVector& theta, const BlockedVector& dir) const {
  check_theta(theta, spec_, "softmax");
  check_theta(dir, spec_, "softmax");
  const auto h = static_cast<std::size_t>(features_.cols());
  const auto c = static_cast<Eigen::Index>(classes_);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dv(
      dir.block(weight_block()).data(), c, static_cast<Eigen::Index>(h));
  Eigen::Map<const Eigen::VectorXd> db(dir.block(bias_block()).data(), c);
  const std::size_t bias_off = classes_ * h;

  auto total = accumulate_chunked(all_.size(), spec_->total_dim(), [&](std::size_t i, std::span<double> acc) {
    const Eigen::VectorXd p = probabilities(theta, i);
    const auto row = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd dz = dv * features_.row(row).transpose() + db;
    // (diag(p) - ppᵀ) dz
    const Eigen::VectorXd u = p.cwiseProduct(dz) - p * p.dot(dz);
    for (std::size_t k = 0; k < classes_; ++k) {
      const double uk = u(static_cast<Eigen::Index>(k));
      for (std::size_t l = 0; l < h; ++l) acc[k * h + l] += uk * features_(row, static_cast<Eigen::Index>(l));
      acc[bias_off + k] += uk;
    }
  });
  const double inv = 1.0 / static_cast<double>(all_.size());
  for (double& x : total) x *= inv;
  return BlockedVector(spec_, std::move(total));
}

std::string SoftmaxLinearObjective::describe() const {
  return "softmax_linear(N=" + std::to_string(num_samples()) + ", h=" + std::to_string(num_features()) +
         ", C=" + std::to_string(classes_) + ")";
}

BlockedVector softmax_ce_grad(const SoftmaxLinearObjective& obj, const BlockedVector& theta,
                              std::span<const std::size_t> samples) {
  if (samples.empty()) return obj.gradient(theta);
  return obj.gradient(theta, samples);
}

// ---------------------------------------------------------------------------

SmoothTestFunction::SmoothTestFunction(Kind kind, std::size_t dim, double box)
    : kind_(kind), box_(box), spec_(BlockSpec::single("theta", dim)) {
  if (!(box > 0.0)) throw std::invalid_argument("smooth test function: box must be positive");
}

double SmoothTestFunction::loss(const BlockedVector& theta) const {
  check_theta(theta, spec_, describe().c_str());
  if (kind_ == Kind::CubicWell) {
    double s = 0.0;
    for (double x : theta.values()) s += x * x * x / 3.0 + x;
    return s;
  }
  const double r2 = kernels::sum_sq(theta.values());
  return 0.25 * r2 * r2;
}

BlockedVector SmoothTestFunction::gradient(const BlockedVector& theta) const {
  check_theta(theta, spec_, describe().c_str());
  BlockedVector g = theta;
  if (kind_ == Kind::CubicWell) {
    for (double& x : g.values()) x = x * x + 1.0;
    return g;
  }
  const double r2 = kernels::sum_sq(theta.values());
  for (double& x : g.values()) x *= r2;
  return g;
}

BlockedVector SmoothTestFunction::hvp(const BlockedVector& theta, const BlockedVector& v) const {
  check_theta(theta, spec_, describe().c_str());
  check_theta(v, spec_, describe().c_str());
  BlockedVector out = v;
  auto o = out.values();
  auto t = theta.values();
  if (kind_ == Kind::CubicWell) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 2.0 * t[i] * o[i];
    return out;
  }
  // (‖θ‖² I + 2θθᵀ) v
  const double r2 = kernels::sum_sq(t);
  const double tv = kernels::dot(t, v.values());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = r2 * o[i] + 2.0 * t[i] * tv;
  return out;
}

double SmoothTestFunction::rho_H_bound() const {
  if (kind_ == Kind::CubicWell) return 2.0;  // |L'''| = 2 per coordinate
  // D³L[u] = 2(θ·u)I + 2(uθᵀ + θuᵀ), operator norm ≤ 6‖θ‖‖u‖, ‖θ‖ ≤ box·√P.
  return 6.0 * box_ * std::sqrt(static_cast<double>(spec_->total_dim()));
}

std::string SmoothTestFunction::describe() const { return kind_ == Kind::CubicWell ? "cubic_well" : "quartic"; }

SmoothTestFunction make_smooth_test_function(const std::string& name, std::size_t dim, double box) {
  if (name == "cubic_well") return SmoothTestFunction(SmoothTestFunction::Kind::CubicWell, dim, box);
  if (name == "quartic") return SmoothTestFunction(SmoothTestFunction::Kind::Quartic, dim, box);
  throw std::invalid_argument("unknown test function: " + name);
}

SmoothEvaluation smooth_test_function(const std::string& name, const BlockedVector& theta, const BlockedVector& v,
                                      double box) {
  const SmoothTestFunction f = make_smooth_test_function(name, theta.size(), box);
  BlockedVector th(f.block_spec(), theta.data());
  BlockedVector dir(f.block_spec(), v.data());
  return {f.loss(th), f.gradient(th), f.hvp(th, dir), f.rho_H_bound()};
}

}  // namespace hetero
