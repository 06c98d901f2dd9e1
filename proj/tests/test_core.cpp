#include <cmath>
#include <limits>
#include <vector>

#include <omp.h>

#include "doctest.h"
#include "hetero/core.hpp"
#include "hetero/kernels.hpp"
#include "hetero/rng.hpp"

using namespace hetero;

namespace {

BlockSpecPtr two_blocks() { return BlockSpec::make({{"w", 3}, {"b", 2}}); }

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * std::exp(rng.uniform(-8.0, 8.0));
  return v;
}

}  // namespace

TEST_CASE("block spec layout and validation") {
  const auto spec = two_blocks();
  CHECK(spec->size() == 2);
  CHECK(spec->total_dim() == 5);
  CHECK(spec->offset(1) == 3);
  CHECK(spec->index_of("b") == 1);
  CHECK_THROWS_AS(spec->index_of("missing"), std::out_of_range);
  CHECK_THROWS_AS(BlockSpec({}), std::invalid_argument);
  CHECK_THROWS_AS(BlockSpec({{"a", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(BlockSpec({{"a", 1}, {"a", 2}}), std::invalid_argument);
}

TEST_CASE("blocked vector views and compatibility") {
  const auto spec = two_blocks();
  BlockedVector v(spec, {1, 2, 3, 4, 5});
  CHECK(v.block(1).size() == 2);
  CHECK(v.block(1)[0] == 4.0);
  CHECK_THROWS_AS(BlockedVector(spec, {1, 2}), std::invalid_argument);
  const BlockedVector other(BlockSpec::make({{"w", 3}, {"b", 2}}), std::vector<double>(5, 0.0));
  CHECK(v.compatible_with(other));
  const BlockedVector diff(BlockSpec::make({{"w", 2}, {"b", 3}}), std::vector<double>(5, 0.0));
  CHECK_FALSE(v.compatible_with(diff));
  CHECK_THROWS_AS(dot(v, diff), std::invalid_argument);
}

TEST_CASE("norms match direct evaluation") {
  const BlockedVector v(two_blocks(), {3, -4, 0, 1, -2});
  CHECK(vector_norm(v, Norm::L1) == doctest::Approx(10.0));
  CHECK(vector_norm(v, Norm::L2) == doctest::Approx(std::sqrt(30.0)));
  CHECK(vector_norm(v, Norm::Linf) == 4.0);
  const auto bn = block_norms(v, Norm::L2);
  REQUIRE(bn.size() == 2);
  CHECK(bn[0].name == "w");
  CHECK(bn[0].value == doctest::Approx(5.0));
  CHECK(bn[1].value == doctest::Approx(std::sqrt(5.0)));
  const BlockedVector bad(two_blocks(), {1, std::numeric_limits<double>::quiet_NaN(), 0, 0, 0});
  CHECK_THROWS_AS(vector_norm(bad, Norm::L2), std::domain_error);
}

TEST_CASE("sign of zero is zero") {
  CHECK(sign(0.0) == 0.0);
  CHECK(sign(-0.0) == 0.0);
  CHECK(sign(2.5) == 1.0);
  CHECK(sign(-1e-300) == -1.0);
  const auto s = sign_vec(BlockedVector(two_blocks(), {0, -3, 2, 0, 1e-20}));
  CHECK(s.data() == std::vector<double>{0, -1, 1, 0, 1});
}

TEST_CASE("steepest directions") {
  const BlockedVector g(two_blocks(), {3, -4, 0, 0, 0});
  const auto d2 = steepest_direction(g, SteepestNorm::L2);
  CHECK(d2[0] == doctest::Approx(-0.6));
  CHECK(d2[1] == doctest::Approx(0.8));
  const auto di = steepest_direction(g, SteepestNorm::Linf);
  CHECK(di.data() == std::vector<double>{-1, 1, 0, 0, 0});
  CHECK_THROWS_AS(steepest_direction(BlockedVector::zeros(two_blocks()), SteepestNorm::L2), std::domain_error);
}

TEST_CASE("l-infinity steepest update minimises the upper model") {
  // Model m(Δ) = gᵀΔ + (L/2)‖Δ‖∞²; along -sign(g) the minimiser is t = ‖g‖₁/L.
  const BlockedVector theta(two_blocks(), {1, 1, 1, 1, 1});
  const BlockedVector g(two_blocks(), {2, -1, 0.5, 0, -0.5});
  const double L = 4.0;
  const auto next = linf_steepest_update(theta, g, L);
  const double t = 4.0 / L;
  CHECK(next[0] == doctest::Approx(1.0 - t));
  CHECK(next[1] == doctest::Approx(1.0 + t));
  CHECK(next[3] == 1.0);
  auto model = [&](double s) {
    double lin = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) lin += g[i] * (-s * sign(g[i]));
    return lin + 0.5 * L * s * s;
  };
  for (double s : {0.5 * t, 0.9 * t, 1.1 * t, 2.0 * t}) CHECK(model(t) < model(s));
}

TEST_CASE("unit sphere draws are seeded and unit length") {
  const auto a = unit_sphere_point(two_blocks(), 3);
  const auto b = unit_sphere_point(two_blocks(), 3);
  const auto c = unit_sphere_point(two_blocks(), 4);
  CHECK(a.data() == b.data());
  CHECK(a.data() != c.data());
  CHECK(vector_norm(a, Norm::L2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a = Rng::derive(1, 0), b = Rng::derive(1, 0), c = Rng::derive(1, 1);
  const auto x = a.bits();
  CHECK(x == b.bits());
  CHECK(x != c.bits());
  Rng r(9);
  double mean = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    mean += z;
    sq += z * z;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  for (std::size_t n : {0u, 1u, 2047u, 2048u, 2049u, 10000u, 100003u}) {
    const auto x = random_values(n, n);
    const auto y = random_values(n, n + 1);
    for (int threads : {1, 2, 3, 8}) {
      omp_set_num_threads(threads);
      CHECK(kernels::sum(x) == kernels::serial::sum(x));
      CHECK(kernels::sum_abs(x) == kernels::serial::sum_abs(x));
      CHECK(kernels::sum_sq(x) == kernels::serial::sum_sq(x));
      CHECK(kernels::dot(x, y) == kernels::serial::dot(x, y));
      CHECK(kernels::max_abs(x) == kernels::serial::max_abs(x));
      std::vector<double> p = y, s = y;
      kernels::axpy(0.37, x, p);
      kernels::serial::axpy(0.37, x, s);
      CHECK(p == s);
    }
  }
  omp_set_num_threads(1);
  std::vector<double> z(5000, 1.0);
  CHECK(kernels::all_finite(z));
  z[4321] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(kernels::all_finite(z));
  CHECK_FALSE(kernels::serial::all_finite(z));
}

TEST_CASE("chunked sum is accurate") {
  // 1 followed by many tiny terms: naive left-to-right loses them entirely.
  std::vector<double> x(1'000'001, 1e-16);
  x[0] = 1.0;
  CHECK(std::abs(kernels::sum(x) - (1.0 + 1e-10)) < 1e-14);
}

TEST_CASE("documented norm and direction examples") {
  const BlockedVector v(BlockSpec::single("x", 2), {3, -4});
  CHECK(vector_norm(v, Norm::L2) == 5.0);
  CHECK(vector_norm(v, Norm::L1) == 7.0);
  CHECK(vector_norm(v, Norm::Linf) == 4.0);

  const auto a = block_norms(BlockedVector(BlockSpec::make({{"a", 2}, {"b", 1}}), {3, 4, 5}), Norm::L2);
  CHECK(a[0].value == 5.0);
  CHECK(a[1].value == 5.0);
  const auto z = block_norms(BlockedVector(BlockSpec::make({{"a", 1}, {"b", 1}}), {0, 0}), Norm::L2);
  CHECK(z[0].value == 0.0);
  CHECK(z[1].value == 0.0);
  const auto l1 = block_norms(BlockedVector(BlockSpec::make({{"a", 2}, {"b", 2}}), {1, 1, 2, 2}), Norm::L1);
  CHECK(l1[0].value == 2.0);
  CHECK(l1[1].value == 4.0);

  const auto s2 = BlockSpec::single("x", 2);
  CHECK(sign_vec(BlockedVector(s2, {-1e-300, 1e-300})).data() == std::vector<double>{-1, 1});
  CHECK(sign_vec(BlockedVector(s2, {0, 0})).data() == std::vector<double>{0, 0});

  const auto d = steepest_direction(BlockedVector(s2, {3, 4}), SteepestNorm::L2);
  CHECK(d[0] == doctest::Approx(-0.6));
  CHECK(d[1] == doctest::Approx(-0.8));
  const BlockedVector g10(s2, {1, 0});
  const auto e = steepest_direction(g10, SteepestNorm::Linf);
  CHECK(e.data() == std::vector<double>{-1, 0});
  CHECK(dot(g10, e) == -vector_norm(g10, Norm::L1));

  CHECK(linf_steepest_update(BlockedVector(s2, {0, 0}), BlockedVector(s2, {1, -1}), 2.0).data() ==
        std::vector<double>{-1, 1});
  CHECK(linf_steepest_update(BlockedVector(s2, {1, 1}), BlockedVector(s2, {2, 0}), 1.0).data() ==
        std::vector<double>{-1, 1});
  const auto s1 = BlockSpec::single("x", 1);
  CHECK(linf_steepest_update(BlockedVector(s1, {5}), BlockedVector(s1, {0}), 3.0).data() == std::vector<double>{5});
}

TEST_CASE("norm chain and block decomposition on random vectors") {
  const auto spec = BlockSpec::make({{"a", 7}, {"b", 1}, {"c", 12}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const BlockedVector v(spec, random_values(20, seed));
    const double li = vector_norm(v, Norm::Linf), l2 = vector_norm(v, Norm::L2), l1 = vector_norm(v, Norm::L1);
    CHECK(li <= l2);
    CHECK(l2 <= l1);
    CHECK(l1 <= 20.0 * li);
    double sq = 0.0;
    for (const auto& bn : block_norms(v, Norm::L2)) sq += bn.value * bn.value;
    CHECK(std::abs(sq - l2 * l2) <= 1e-12 * l2 * l2);
    CHECK(vector_norm(steepest_direction(v, SteepestNorm::L2), Norm::L2) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(vector_norm(steepest_direction(v, SteepestNorm::Linf), Norm::Linf) == 1.0);
  }
}
