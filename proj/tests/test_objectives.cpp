#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <omp.h>

#include "doctest.h"
#include "hetero/objectives.hpp"
#include "hetero/rng.hpp"

using namespace hetero;

namespace {

BlockedVector random_point(const Objective& f, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  BlockedVector v = BlockedVector::zeros(f.block_spec());
  for (double& x : v.values()) x = scale * rng.normal();
  return v;
}

// Central differences of the loss, coordinate by coordinate.
std::vector<double> fd_gradient(const Objective& f, const BlockedVector& theta) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(theta[i]));
    BlockedVector p = theta, m = theta;
    p[i] += h;
    m[i] -= h;
    g[i] = (f.loss(p) - f.loss(m)) / (2.0 * h);
  }
  return g;
}

// Central differences of the gradient along v.
std::vector<double> fd_hvp(const Objective& f, const BlockedVector& theta, const BlockedVector& v) {
  const double h = 1e-6;
  BlockedVector p = theta, m = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    p[i] += h * v[i];
    m[i] -= h * v[i];
  }
  const auto gp = f.gradient(p), gm = f.gradient(m);
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h);
  return out;
}

double rel_diff(const std::vector<double>& a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

void check_derivatives(const Objective& f, std::uint64_t seed, double scale, double tol) {
  for (int k = 0; k < 5; ++k) {
    const auto theta = random_point(f, seed + k, scale);
    const auto v = random_point(f, seed + 100 + k);
    CHECK(rel_diff(fd_gradient(f, theta), f.gradient(theta).values()) < tol);
    CHECK(rel_diff(fd_hvp(f, theta, v), f.hvp(theta, v).values()) < tol);
  }
}

}  // namespace

TEST_CASE("quadratic presets have the stated spectra") {
  const auto homo = build_quadratic(QuadraticSetting::Homo, 0);
  const auto hetero = build_quadratic(QuadraticSetting::Hetero, 0);
  CHECK(homo.block_spec()->size() == 3);
  CHECK(homo.dim() == 9);
  CHECK(homo.block_spec()->name(0) == "block1");
  CHECK(hetero.eigenvalues(2) == std::vector<double>{4998, 4999, 5000});
  CHECK(homo.lambda_min() == 1.0);
  CHECK(homo.lambda_max() == 5000.0);
  const auto norms = *hetero.exact_block_operator_norms(BlockedVector::zeros(hetero.block_spec()));
  CHECK(norms == std::vector<double>{3, 101, 5000});

  // Dense eigen-decomposition of each block reproduces the eigenvalues.
  for (std::size_t b = 0; b < 3; ++b) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(homo.block_hessian(b));
    for (int i = 0; i < 3; ++i) CHECK(es.eigenvalues()(i) == doctest::Approx(homo.eigenvalues(b)[i]).epsilon(1e-12));
    const auto& Q = homo.block_orthogonal(b);
    CHECK((Q.transpose() * Q - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-13);
  }
  // Off-diagonal blocks of the assembled Hessian are zero.
  const auto H = hetero.dense_hessian();
  CHECK(H.block(0, 3, 3, 6).norm() == 0.0);
  CHECK((H - H.transpose()).norm() == 0.0);
}

TEST_CASE("quadratic orthogonal factors are seeded and sign-fixed") {
  const auto A = seeded_orthogonal(4, 7), B = seeded_orthogonal(4, 7), C = seeded_orthogonal(4, 8);
  CHECK(A == B);
  CHECK((A - C).norm() > 1e-3);
  CHECK((A.transpose() * A - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-13);
}

TEST_CASE("quadratic loss, gradient and hvp agree with H") {
  const auto q = build_quadratic(QuadraticSetting::Hetero, 3);
  const auto H = q.dense_hessian();
  const auto theta = random_point(q, 1);
  const auto v = random_point(q, 2);
  const Eigen::Map<const Eigen::VectorXd> t(theta.values().data(), 9), vv(v.values().data(), 9);
  CHECK(q.loss(theta) == doctest::Approx(0.5 * t.dot(H * t)).epsilon(1e-12));
  const Eigen::VectorXd Ht = H * t, Hv = H * vv;
  for (int i = 0; i < 9; ++i) {
    CHECK(q.gradient(theta)[i] == doctest::Approx(Ht(i)).epsilon(1e-12));
    CHECK(q.hvp(theta, v)[i] == doctest::Approx(Hv(i)).epsilon(1e-12));
  }
  const auto lg = quad_eval(q, theta);
  CHECK(lg.loss == doctest::Approx(q.loss(theta)).epsilon(1e-12));
  check_derivatives(q, 10, 1.0, 1e-6);
}

TEST_CASE("quadratic rejects bad eigenvalues") {
  CHECK_THROWS_AS(QuadraticObjective({}, 0), std::invalid_argument);
  CHECK_THROWS_AS(QuadraticObjective({{1.0}, {}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(QuadraticObjective({{1.0, -2.0}}, 0), std::invalid_argument);
}

TEST_CASE("dense quadratic derivatives and minimum") {
  Eigen::MatrixXd A(3, 3);
  A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const DenseQuadraticObjective f(BlockSpec::make({{"a", 1}, {"b", 2}}), A);
  check_derivatives(f, 20, 1.0, 1e-6);
  CHECK(*f.minimum_value() == 0.0);
  Eigen::MatrixXd asym = A;
  asym(0, 1) = 5;
  CHECK_THROWS_AS(DenseQuadraticObjective(BlockSpec::make({{"a", 3}}), asym), std::invalid_argument);
}

TEST_CASE("softmax head derivatives") {
  const auto obj = SoftmaxLinearObjective::synthetic(20, 4, 3, 5);
  CHECK(obj.block_spec()->name(0) == "V");
  CHECK(obj.block_spec()->name(1) == "b");
  CHECK(obj.dim() == 15);
  check_derivatives(obj, 30, 0.5, 1e-6);
  // Loss at zero is log C; probabilities are a simplex.
  const auto zero = BlockedVector::zeros(obj.block_spec());
  CHECK(obj.loss(zero) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  const auto p = obj.probabilities(random_point(obj, 1), 4);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p.minCoeff() > 0.0);
}

TEST_CASE("softmax subset gradient is the mean of per-sample gradients") {
  const auto obj = SoftmaxLinearObjective::synthetic(12, 3, 4, 6);
  const auto theta = random_point(obj, 2, 0.3);
  const std::vector<std::size_t> idx{1, 5, 7};
  const auto g = obj.gradient(theta, idx);
  std::vector<double> ref(obj.dim(), 0.0);
  for (auto i : idx) {
    const auto gi = obj.sample_gradient(theta, i);
    for (std::size_t j = 0; j < ref.size(); ++j) ref[j] += gi[j] / 3.0;
  }
  CHECK(rel_diff(ref, g.values()) < 1e-14);
  CHECK_THROWS_AS(obj.gradient(theta, std::vector<std::size_t>{}), std::invalid_argument);
  CHECK_THROWS_AS(obj.gradient(theta, std::vector<std::size_t>{12}), std::invalid_argument);
}

TEST_CASE("softmax gradient is bit-identical to the serial loop") {
  const auto obj = SoftmaxLinearObjective::synthetic(9000, 6, 5, 8);
  const auto theta = random_point(obj, 4, 0.2);
  std::vector<std::size_t> all(obj.num_samples());
  std::iota(all.begin(), all.end(), 0);
  const auto serial = obj.gradient_serial(theta, all);
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    CHECK(obj.gradient(theta).data() == serial.data());
    CHECK(softmax_ce_grad(obj, theta).data() == serial.data());
  }
  omp_set_num_threads(1);
}

TEST_CASE("softmax construction checks") {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Ones(3, 2);
  CHECK_THROWS_AS(SoftmaxLinearObjective(phi, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(SoftmaxLinearObjective(phi, {0, 1, 2}, 2), std::invalid_argument);
}

TEST_CASE("smooth test functions") {
  const auto cubic = make_smooth_test_function("cubic_well", 4);
  const auto quartic = make_smooth_test_function("quartic", 4, 0.5);
  check_derivatives(cubic, 40, 0.5, 1e-6);
  check_derivatives(quartic, 50, 0.5, 1e-6);
  CHECK(cubic.rho_H_bound() == 2.0);
  CHECK(quartic.rho_H_bound() == doctest::Approx(6.0 * 0.5 * 2.0));
  CHECK_THROWS_AS(make_smooth_test_function("rosenbrock", 2), std::invalid_argument);

  const BlockedVector th(cubic.block_spec(), {0.1, -0.2, 0.3, 0.0});
  const BlockedVector v(cubic.block_spec(), {1, 1, 1, 1});
  const auto e = smooth_test_function("cubic_well", th, v);
  CHECK(e.loss == doctest::Approx(cubic.loss(th)));
  CHECK(e.hvp[1] == doctest::Approx(-0.4));
  CHECK(e.rho_H_bound == 2.0);
}

TEST_CASE("documented objective examples") {
  const QuadraticObjective unit({{2.0}, {2.0}, {2.0}}, 0);
  const BlockedVector th(unit.block_spec(), {1.0, -2.0, 0.5});
  CHECK(unit.lambda_max() == 2.0);
  CHECK(unit.loss(th) == doctest::Approx(1.0 + 4.0 + 0.25).epsilon(1e-15));

  const QuadraticObjective one({{2.0}}, 0);
  const auto e = quad_eval(one, BlockedVector(one.block_spec(), {3.0}));
  CHECK(e.loss == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(e.gradient[0] == doctest::Approx(6.0).epsilon(1e-15));
  const auto z = quad_eval(one, BlockedVector::zeros(one.block_spec()));
  CHECK(z.loss == 0.0);
  CHECK(z.gradient[0] == 0.0);

  const auto q = build_quadratic(QuadraticSetting::Homo, 9);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto t = random_point(q, s);
    CHECK(q.loss(t) == doctest::Approx(0.5 * dot(t, q.hvp(t, t))).epsilon(1e-12));
  }

  Eigen::MatrixXd phi(1, 2);
  phi << 0.7, -1.3;
  const SoftmaxLinearObjective sm(phi, {0}, 2);
  const auto g = softmax_ce_grad(sm, BlockedVector::zeros(sm.block_spec()));
  const auto gb = g.block(sm.bias_block());
  CHECK(gb[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(gb[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax loss is nonnegative and bias gradient sums to zero") {
  const auto obj = SoftmaxLinearObjective::synthetic(40, 5, 4, 13);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto th = random_point(obj, s, 2.0);
    CHECK(obj.loss(th) >= 0.0);
    const auto gb = obj.gradient(th).block(obj.bias_block());
    double total = 0.0;
    for (double x : gb) total += x;
    CHECK(std::abs(total) < 1e-14);
  }
}
