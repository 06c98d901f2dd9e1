// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hetero/core.hpp"
#include "hetero/hessian.hpp"
#include "hetero/metrics.hpp"
#include "hetero/objectives.hpp"
#include "hetero/optimizers.hpp"
#include "hetero/rng.hpp"
#include "hetero/transformer.hpp"

using namespace hetero;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::vector<double> exact_lambda(const QuadraticObjective& q) {
  return *q.exact_block_operator_norms(BlockedVector::zeros(q.block_spec()));
}

ScheduleSpec optimal_sign(const QuadraticObjective& q) {
  ScheduleSpec s;
  s.kind = ScheduleKind::QuadOptimalSign;
  s.lambda_P = lambda_P(*q.block_spec(), exact_lambda(q));
  return s;
}

ScheduleSpec classical_gd(const QuadraticObjective& q) {
  ScheduleSpec s;
  s.kind = ScheduleKind::QuadClassicalGd;
  s.lambda_min = q.lambda_min();
  s.lambda_max = q.lambda_max();
  return s;
}

OptimizerConfig optimizer(OptimizerKind k) {
  OptimizerConfig o;
  o.kind = k;
  return o;
}

// Steps until ‖g‖₂ ≤ 1e-3‖g₀‖₂, or the budget if never.
std::size_t steps_to_reduce(const QuadraticObjective& q, OptimizerKind kind, const ScheduleSpec& s,
                            const BlockedVector& theta0, bool& reached) {
  const double target = 1e-3 * vector_norm(q.gradient(theta0), Norm::L2);
  RunOptions ro;
  ro.stop_when = [target](const TrajectoryRow& r) { return r.grad_l2 <= target; };
  const auto rec = run_sequence(q, optimizer(kind), s, theta0, 2'000'000, std::nullopt, ro);
  reached = rec.rows.back().grad_l2 <= target;
  return rec.steps_run();
}

// ---------------------------------------------------------------------------

Outcome lambda_p_reproduction() {
  Outcome o;
  const auto homo = build_quadratic(QuadraticSetting::Homo, 0);
  const auto hetero = build_quadratic(QuadraticSetting::Hetero, 0);
  const double lp_homo = lambda_P(*homo.block_spec(), exact_lambda(homo));
  const double lp_hetero = lambda_P(*hetero.block_spec(), exact_lambda(hetero));
  const auto th = BlockedVector::filled(homo.block_spec(), 1.0);
  const double pw_homo = lambda_P(*homo.block_spec(), block_spectral_report(homo, th).lambda);
  const double pw_hetero = lambda_P(*hetero.block_spec(), block_spectral_report(hetero, th).lambda);
  o.detail.precision(10);
  o.detail << "Homo " << lp_homo << " (power iteration " << pw_homo << "), Hetero " << lp_hetero
           << " (power iteration " << pw_hetero << ")";
  o.require(std::abs(lp_homo - 4999.0) <= 1e-9, "Homo within 1e-9 of 4999");
  o.require(std::abs(lp_hetero - 1701.3333) <= 1e-4, "Hetero within 1e-4 of 1701.3333");
  o.require(std::abs(pw_homo - 4999.0) <= 1e-4 && std::abs(pw_hetero - 1701.3333) <= 1e-4,
            "power-iteration estimates within 1e-4");
  return o;
}

Outcome lambda_g_reproduction() {
  Outcome o;
  o.detail.precision(10);
  for (auto setting : {QuadraticSetting::Homo, QuadraticSetting::Hetero}) {
    const auto q = build_quadratic(setting, 0);
    const auto theta0 = BlockedVector::filled(q.block_spec(), 1.0);
    // Component of θ₀ along the eigenvector of the largest eigenvalue.
    const std::size_t top = q.block_spec()->size() - 1;
    const auto& ev = q.eigenvalues(top);
    const auto j = static_cast<Eigen::Index>(std::max_element(ev.begin(), ev.end()) - ev.begin());
    const auto blk = theta0.block(top);
    const Eigen::Map<const Eigen::VectorXd> x(blk.data(), static_cast<Eigen::Index>(blk.size()));
    const double comp = q.block_orthogonal(top).col(j).dot(x);

    const auto rec = run_sequence(q, optimizer(OptimizerKind::Gd), classical_gd(q), theta0, 50'000);
    std::vector<std::vector<double>> rows;
    for (const auto& r : rec.rows) rows.push_back(r.block_l2);
    const double lg = lambda_G_trajectory(rows, exact_lambda(q));
    const char* name = setting == QuadraticSetting::Homo ? "Homo" : "Hetero";
    o.detail << name << " " << lg << " ";
    o.require(std::abs(comp) > 1e-6, std::string(name) + " theta0 has a top-eigenvector component");
    o.require(lg >= 4999.0 && lg <= 5000.0, std::string(name) + " in [4999, 5000]");
    o.require(lg >= 4999.99, std::string(name) + " >= 4999.99");
  }
  return o;
}

Outcome sign_vs_grad_gap() {
  Outcome o;
  const auto homo = build_quadratic(QuadraticSetting::Homo, 0);
  const auto hetero = build_quadratic(QuadraticSetting::Hetero, 0);
  // Default θ₀ plus three sphere-uniform starts.
  for (int start = 0; start < 4; ++start) {
    const auto th = start == 0 ? BlockedVector::filled(homo.block_spec(), 1.0)
                               : unit_sphere_point(homo.block_spec(), static_cast<std::uint64_t>(start));
    bool r1, r2, r3, r4;
    const auto s_homo = steps_to_reduce(homo, OptimizerKind::Sign, optimal_sign(homo), th, r1);
    const auto s_het = steps_to_reduce(hetero, OptimizerKind::Sign, optimal_sign(hetero), th, r2);
    const auto g_homo = steps_to_reduce(homo, OptimizerKind::Gd, classical_gd(homo), th, r3);
    const auto g_het = steps_to_reduce(hetero, OptimizerKind::Gd, classical_gd(hetero), th, r4);
    const double ratio = static_cast<double>(std::max(g_homo, g_het)) / static_cast<double>(std::min(g_homo, g_het));
    o.detail << (start == 0 ? "ones" : "sphere" + std::to_string(start)) << ": sign " << s_het << "<" << s_homo
             << ", grad " << g_het << "/" << g_homo << "; ";
    o.require(r1 && r2 && r3 && r4, "all runs reach 1e-3 of the initial gradient norm");
    o.require(s_het < s_homo, "sign-based: Hetero faster than Homo");
    o.require(ratio <= 2.0, "gradient-based counts within a factor 2");
  }
  return o;
}

Outcome theorem_bound_consistency() {
  Outcome o;
  const std::vector<double> eps{0.1, 1.0, 10.0};
  for (auto setting : {QuadraticSetting::Homo, QuadraticSetting::Hetero}) {
    const auto q = build_quadratic(setting, 0);
    const auto theta0 = BlockedVector::filled(q.block_spec(), 1.0);
    const std::size_t P = q.dim();
    const double lp = lambda_P(*q.block_spec(), exact_lambda(q));
    const double l0 = q.loss(theta0);
    const double thr = static_cast<double>(P) * eps.front();
    RunOptions ro;
    ro.stop_when = [thr](const TrajectoryRow& r) { return r.grad_l1 <= thr; };
    const auto rec = run_sequence(q, optimizer(OptimizerKind::Sign), optimal_sign(q), theta0, 10'000'000, std::nullopt, ro);
    const auto norms = rec.grad_norms(1);
    for (double e : eps) {
      const auto m = iteration_complexity(norms, P, e, 1);
      const double bound = 2.0 * (l0 - *q.minimum_value()) * lp / (static_cast<double>(P) * e * e);
      o.detail << (setting == QuadraticSetting::Homo ? "Homo" : "Hetero") << " eps=" << e << ": T="
               << (m.T ? std::to_string(*m.T) : "none") << " bound=" << bound << "; ";
      o.require(m.T.has_value() && static_cast<double>(*m.T) <= bound, "T_eps within the iteration bound");
    }
  }
  return o;
}

Outcome per_step_descent() {
  Outcome o;
  double worst = -1e300;
  std::size_t checked = 0;
  for (auto setting : {QuadraticSetting::Homo, QuadraticSetting::Hetero}) {
    const auto q = build_quadratic(setting, 0);
    ScheduleSpec s;
    s.kind = ScheduleKind::TheoremSign;
    s.lambda_P = lambda_P(*q.block_spec(), exact_lambda(q));
    s.rho_H = 0.0;
    for (int start = 0; start < 3; ++start) {
      const auto th = start == 0 ? BlockedVector::filled(q.block_spec(), 1.0)
                                 : unit_sphere_point(q.block_spec(), static_cast<std::uint64_t>(start));
      const auto rec = run_sequence(q, optimizer(OptimizerKind::Sign), s, th, 2000);
      for (std::size_t t = 0; t + 1 < rec.rows.size(); ++t) {
        const auto& r = rec.rows[t];
        const double gap = rec.rows[t + 1].loss - r.loss + 0.5 * r.lr.value() * r.grad_l1;
        worst = std::max(worst, gap);
        ++checked;
        if (gap > 1e-9) o.require(false, "step " + std::to_string(t) + " violates the descent inequality");
      }
    }
  }
  o.detail << checked << " steps, max of L(t+1)-L(t)+(eta/2)|g|_1 = " << worst;
  return o;
}

Outcome jacobian_oracles() {
  namespace tf = transformer;
  Outcome o;
  Rng rng(2024);
  double worst_ln = 0.0, worst_rms = 0.0;
  const int instances = 20;
  for (int k = 0; k < instances; ++k) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(4));
    const auto d = static_cast<Eigen::Index>(2 + rng.below(7));
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.normal();
    Eigen::VectorXd gamma(d);
    for (Eigen::Index j = 0; j < d; ++j) gamma(j) = rng.normal();
    worst_ln = std::max(worst_ln, tf::relative_error(tf::layer_norm_jacobian(X),
                                                     tf::finite_difference_jacobian(
                                                         [](const Eigen::MatrixXd& Y) { return tf::layer_norm(Y); }, X)));
    worst_rms = std::max(worst_rms, tf::relative_error(tf::rms_norm_jacobian(X, gamma),
                                                       tf::finite_difference_jacobian(
                                                           [&](const Eigen::MatrixXd& Y) { return tf::rms_norm(Y, gamma); }, X)));
  }
  o.detail << instances << " instances, max rel err LN " << worst_ln << ", RMS " << worst_rms;
  o.require(worst_ln <= 1e-6, "layer norm rel err <= 1e-6");
  o.require(worst_rms <= 1e-6, "rms norm rel err <= 1e-6");
  return o;
}

Outcome onehot_extremality() {
  Outcome o;
  for (std::size_t n : {2u, 3u, 5u}) {
    const auto r = transformer::onehot_extremality_check(n, 10'000, 77 + n);
    o.detail << "n=" << n << ": violations " << r.violations << ", strict " << r.strict_checked << "/" << r.trials
             << ", max(|P|_F - sqrt n) " << r.max_frobenius_excess << ", min term " << r.min_jacobian_term_filtered
             << "; ";
    o.require(r.violations == 0, "no violations");
    o.require(r.strict_checked > 0, "some samples pass the entropy filter");
    o.require(r.max_frobenius_excess <= 1e-9, "|P|_F <= sqrt(n)");
    o.require(r.min_jacobian_term >= 0.0 && r.min_jacobian_term_filtered > 0.0, "U_Q term positive off one-hot");
    o.require(std::abs(r.onehot_frobenius - std::sqrt(static_cast<double>(n))) <= 1e-12 && r.onehot_jacobian_term == 0.0,
              "one-hot attains both extremes");
  }
  return o;
}

Outcome linear_head_proposition() {
  Outcome o;
  Rng rng(99);
  double worst = 0.0;
  const double eta = 0.05;
  for (int k = 0; k < 100; ++k) {
    const std::size_t N = 1 + rng.below(32);
    const std::size_t C = 2 + rng.below(4);
    const std::size_t h = 1 + rng.below(8);
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(h));
    for (Eigen::Index i = 0; i < phi.rows(); ++i)
      for (Eigen::Index j = 0; j < phi.cols(); ++j) phi(i, j) = rng.normal();
    std::vector<int> y(N);
    for (auto& v : y) v = static_cast<int>(rng.below(C));
    const SoftmaxLinearObjective obj(std::move(phi), y, C);
    BlockedVector theta = BlockedVector::zeros(obj.block_spec());
    for (double& v : theta.values()) v = 0.3 * rng.normal();
    const auto sw = linear_head_epoch_updates(obj, theta, eta, LinearHeadMode::SampleWiseFrozen);
    const auto cf = linear_head_sample_wise_closed_form(obj, eta);
    for (std::size_t i = 0; i < sw.delta_b.size(); ++i) worst = std::max(worst, std::abs(sw.delta_b[i] - cf.delta_b[i]));
    for (std::size_t i = 0; i < sw.delta_V.size(); ++i) worst = std::max(worst, std::abs(sw.delta_V[i] - cf.delta_V[i]));
  }
  Eigen::MatrixXd phi(16, 3);
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    for (Eigen::Index j = 0; j < phi.cols(); ++j) phi(i, j) = rng.normal();
  std::vector<int> y(16);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  const SoftmaxLinearObjective bal(std::move(phi), y, 2);
  const auto bu = linear_head_epoch_updates(bal, BlockedVector::zeros(bal.block_spec()), eta, LinearHeadMode::SampleWiseFrozen);
  const bool zero = std::all_of(bu.delta_b.begin(), bu.delta_b.end(), [](double v) { return v == 0.0; });
  o.detail << "100 instances, max abs err " << worst << ", balanced binary delta_b "
           << (zero ? "exactly 0" : "nonzero");
  o.require(worst <= 1e-12, "closed forms within 1e-12");
  o.require(zero, "balanced binary bias update is exactly zero");
  return o;
}

double gini_brute(const std::vector<double>& x) {
  double s = 0.0, sum = 0.0;
  for (double a : x) {
    sum += a;
    for (double b : x) s += std::abs(a - b);
  }
  const double n = static_cast<double>(x.size());
  return s / (2.0 * n * n * (sum / n));
}

Outcome gini_suite() {
  Outcome o;
  const std::vector<double> flat{1, 1, 1, 1};
  o.require(gini(flat) == 0.0, "gini([1,1,1,1]) = 0");
  for (std::size_t n : {1u, 2u, 4u, 7u, 50u}) {
    std::vector<double> oh(n, 0.0);
    oh[n / 2] = 1.0;
    o.require(std::abs(gini(oh) - (static_cast<double>(n) - 1.0) / static_cast<double>(n)) <= 1e-12,
              "one-hot gives (n-1)/n for n=" + std::to_string(n));
  }
  Rng rng(5);
  double worst_scale = 0.0, worst_brute = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(1 + rng.below(60));
    for (double& v : x) v = rng.exponential();
    const double g = gini(x);
    std::vector<double> scaled = x;
    const double c = std::exp(rng.uniform(-5.0, 5.0));
    for (double& v : scaled) v *= c;
    worst_scale = std::max(worst_scale, std::abs(gini(scaled) - g));
    worst_brute = std::max(worst_brute, std::abs(gini_brute(x) - g));
  }
  o.detail << "scale-invariance err " << worst_scale << ", sorted vs brute force err " << worst_brute;
  o.require(worst_scale <= 1e-12, "scale invariance within 1e-12");
  o.require(worst_brute <= 1e-12, "sorted formula matches brute force within 1e-12");
  return o;
}

Outcome lemma_suite() {
  Outcome o;
  Rng rng(31);
  std::size_t cubic_bad = 0;
  for (int k = 0; k < 100'000; ++k) {
    const double a = k % 10 == 0 ? 0.0 : std::exp(rng.uniform(-10.0, 10.0));
    const double b = std::exp(rng.uniform(-10.0, 10.0));
    const double lhs = (a + b) * (a + b) * (a + b);
    const double rhs = 4.0 * (a * a * a + b * b * b);
    if (lhs > rhs * (1.0 + 1e-12)) ++cubic_bad;
  }
  o.require(cubic_bad == 0, "(a+b)^3 <= 4(a^3+b^3)");

  const std::size_t dim = 3;
  const auto f = make_smooth_test_function("cubic_well", dim, 1.0);
  const double rho = f.rho_H_bound();
  std::size_t base_bad = 0;
  double worst_base = -1e300;
  for (int k = 0; k < 10'000; ++k) {
    BlockedVector a = BlockedVector::zeros(f.block_spec()), b = a;
    for (double& v : a.values()) v = rng.uniform(-1.0, 1.0);
    for (double& v : b.values()) v = rng.uniform(-1.0, 1.0);
    BlockedVector d = b;
    for (std::size_t i = 0; i < dim; ++i) d[i] -= a[i];
    const double dn = vector_norm(d, Norm::L2);
    const double rhs = dot(f.gradient(a), d) + 0.5 * dot(d, f.hvp(a, d)) + rho / 6.0 * dn * dn * dn;
    const double gap = f.loss(b) - f.loss(a) - rhs;
    worst_base = std::max(worst_base, gap);
    if (gap > 1e-12) ++base_bad;
  }
  o.require(base_bad == 0, "base inequality on cubic_well with rho_H = 2");

  double worst_quad = 0.0;
  for (auto setting : {QuadraticSetting::Homo, QuadraticSetting::Hetero}) {
    const auto q = build_quadratic(setting, 0);
    for (int k = 0; k < 1000; ++k) {
      BlockedVector a = BlockedVector::zeros(q.block_spec()), b = a;
      for (double& v : a.values()) v = rng.normal();
      for (double& v : b.values()) v = rng.normal();
      BlockedVector d = b;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= a[i];
      const double lhs = q.loss(b) - q.loss(a);
      const double rhs = dot(q.gradient(a), d) + 0.5 * dot(d, q.hvp(a, d));
      const double scale = std::max({std::abs(q.loss(a)), std::abs(q.loss(b)), 1e-300});
      worst_quad = std::max(worst_quad, std::abs(lhs - rhs) / scale);
    }
  }
  o.require(worst_quad <= 1e-10, "quadratic equality within 1e-10 relative");
  o.detail << "cubic violations " << cubic_bad << "/100000, base inequality max gap " << worst_base
           << " over 10000 pairs, quadratic max rel err " << worst_quad;
  return o;
}

Outcome noise_estimators() {
  Outcome o;
  const auto obj = SoftmaxLinearObjective::synthetic(256, 8, 4, 11);
  const auto theta = BlockedVector::filled(obj.block_spec(), 0.1);
  const auto full = noise_constants(obj, theta, obj.num_samples(), 4, 1);
  o.require(full.sigma2 == 0.0 && full.sigma3 == 0.0, "batch = N gives zero noise");
  const auto a = noise_constants(obj, theta, 32, 50, 7);
  const auto b = noise_constants(obj, theta, 32, 50, 7);
  o.require(a.sigma2 == b.sigma2 && a.sigma3 == b.sigma3, "deterministic under a fixed seed");
  std::vector<double> s3;
  for (std::size_t batch : {8u, 16u, 32u, 64u, 128u}) s3.push_back(noise_constants(obj, theta, batch, 200, 3).sigma3);
  o.detail << "sigma3 by batch 8..128:";
  for (std::size_t i = 0; i < s3.size(); ++i) {
    o.detail << " " << s3[i];
    if (i > 0) o.require(s3[i] <= 1.2 * s3[i - 1], "sigma3 decreases as the batch doubles");
  }
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double time_limit_s;  // 0 = none stated
  };
  const std::vector<Criterion> criteria{
      {1, "Lambda_P reproduction", lambda_p_reproduction, 1.0},
      {2, "Lambda_G reproduction", lambda_g_reproduction, 5.0},
      {3, "sign-vs-grad heterogeneity gap", sign_vs_grad_gap, 10.0},
      {4, "iteration bound consistency", theorem_bound_consistency, 0.0},
      {5, "per-step descent inequality", per_step_descent, 0.0},
      {6, "normalization Jacobian oracles", jacobian_oracles, 1.0},
      {7, "one-hot extremality", onehot_extremality, 5.0},
      {8, "linear-head closed forms", linear_head_proposition, 0.0},
      {9, "Gini suite", gini_suite, 0.0},
      {10, "lemma suite", lemma_suite, 0.0},
      {11, "noise estimators", noise_estimators, 0.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit_s > 0.0 && secs > c.time_limit_s) {
      out.pass = false;
      out.detail << " [over time limit " << c.time_limit_s << " s]";
    }
    if (!out.pass) ++failures;
    std::printf("%s %2d %s (%.3f s): %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs, out.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
