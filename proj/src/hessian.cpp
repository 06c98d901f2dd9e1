#include "hetero/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hetero/kernels.hpp"

namespace hetero {

PowerIterationResult power_iteration(const LinearOperator& op, std::size_t dim, const PowerIterationOptions& options) {
  if (options.max_iters < 1) throw std::invalid_argument("power_iteration: max_iters must be at least 1");
  if (!(options.tol > 0.0)) throw std::invalid_argument("power_iteration: tol must be positive");
  if (dim == 0) throw std::invalid_argument("power_iteration: dimension must be positive");

  Rng rng(options.seed);
  std::vector<double> v(dim), w(dim);
  for (double& x : v) x = rng.normal();
  {
    const double n = std::sqrt(kernels::sum_sq(v));
    for (double& x : v) x /= n;
  }

  PowerIterationResult res;
  double prev = 0.0, prev_inc = 0.0;
  for (std::size_t k = 1; k <= options.max_iters; ++k) {
    std::fill(w.begin(), w.end(), 0.0);
    op(v, w);
    if (!kernels::all_finite(w)) throw std::domain_error("power_iteration: operator produced non-finite values");
    const double est = std::sqrt(kernels::sum_sq(w));
    const double rq = kernels::dot(v, w);
    res.value = est;
    res.iterations = k;
    if (options.record_history) {
      res.norm_history.push_back(est);
      res.rayleigh_history.push_back(rq);
    }
    if (est == 0.0) {
      res.converged = true;
      res.achieved_tol = 0.0;
      break;
    }

    double resid2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double r = w[i] - rq * v[i];
      resid2 += r * r;
    }
    const double resid = std::sqrt(resid2) / est;

    // Remaining gap to the limit from the geometric rate of the increments.
    double gap = std::numeric_limits<double>::infinity();
    const double inc = est - prev;
    if (k >= 3) {
      if (inc <= 0.0) {
        gap = std::abs(inc);
      } else if (prev_inc > 0.0 && inc < prev_inc) {
        const double q = inc / prev_inc;
        gap = inc * q / (1.0 - q);
      }
    }
    const double rel_gap = gap / est;
    res.achieved_tol = std::min(resid, rel_gap);
    if (resid <= options.tol || (rel_gap <= options.tol && std::abs(inc) <= options.tol * est)) {
      res.converged = true;
      break;
    }
    prev_inc = inc;
    prev = est;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / est;
  }
  return res;
}

LinearOperator full_hvp(const Objective& objective, const BlockedVector& theta) {
  return [&objective, theta](std::span<const double> x, std::span<double> y) {
    const BlockedVector v(theta.spec_ptr(), std::vector<double>(x.begin(), x.end()));
    const BlockedVector hv = objective.hvp(theta, v);
    std::copy(hv.values().begin(), hv.values().end(), y.begin());
  };
}

LinearOperator block_restricted_hvp(const Objective& objective, const BlockedVector& theta, std::size_t block) {
  if (block >= theta.spec().size()) throw std::invalid_argument("block_restricted_hvp: block index out of range");
  return [&objective, theta, block](std::span<const double> x, std::span<double> y) {
    if (x.size() != theta.spec().dim(block) || y.size() != x.size())
      throw std::invalid_argument("block_restricted_hvp: dimension mismatch");
    BlockedVector v = BlockedVector::zeros(theta.spec_ptr());
    std::copy(x.begin(), x.end(), v.block(block).begin());
    const BlockedVector hv = objective.hvp(theta, v);
    const auto out = hv.block(block);
    std::copy(out.begin(), out.end(), y.begin());
  };
}

LinearOperator block_diagonal_part(const LinearOperator& full, const BlockSpecPtr& spec) {
  return [full, spec](std::span<const double> x, std::span<double> y) {
    const std::size_t n = spec->total_dim();
    std::vector<double> in(n), out(n);
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t b = 0; b < spec->size(); ++b) {
      const std::size_t off = spec->offset(b), d = spec->dim(b);
      std::fill(in.begin(), in.end(), 0.0);
      std::fill(out.begin(), out.end(), 0.0);
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(off), d, in.begin() + static_cast<std::ptrdiff_t>(off));
      full(in, out);
      std::copy_n(out.begin() + static_cast<std::ptrdiff_t>(off), d, y.begin() + static_cast<std::ptrdiff_t>(off));
    }
  };
}

namespace {

template <bool Parallel>
BlockSpectralReport spectral_report_impl(const Objective& objective, const BlockedVector& theta,
                                         const PowerIterationOptions& options) {
  const auto& spec = theta.spec();
  if (!(spec == *objective.block_spec())) throw std::invalid_argument("block_spectral_report: dimension mismatch");
  const std::size_t nb = spec.size();
  std::vector<PowerIterationResult> results(nb);
  const auto run = [&](std::size_t b) {
    PowerIterationOptions o = options;
    o.seed = Rng::derive(options.seed, b).bits();
    results[b] = power_iteration(block_restricted_hvp(objective, theta, b), spec.dim(b), o);
  };
  if constexpr (Parallel) {
    const auto n = static_cast<std::ptrdiff_t>(nb);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t b = 0; b < n; ++b) run(static_cast<std::size_t>(b));
  } else {
    for (std::size_t b = 0; b < nb; ++b) run(b);
  }

  BlockSpectralReport rep{{}, {}, {}, {}, {}, theta};
  for (std::size_t b = 0; b < nb; ++b) {
    rep.names.push_back(spec.name(b));
    rep.lambda.push_back(results[b].value);
    rep.iterations.push_back(results[b].iterations);
    rep.converged.push_back(results[b].converged);
    rep.achieved_tol.push_back(results[b].achieved_tol);
  }
  return rep;
}

void check_lambda(std::span<const double> lambda, std::size_t blocks, const char* what) {
  if (lambda.size() != blocks) throw std::invalid_argument(std::string(what) + ": one lambda per block required");
  for (double l : lambda)
    if (!(l >= 0.0)) throw std::invalid_argument(std::string(what) + ": block norms must be nonnegative");
}

}  // namespace

BlockSpectralReport block_spectral_report(const Objective& objective, const BlockedVector& theta,
                                          const PowerIterationOptions& options) {
  return spectral_report_impl<true>(objective, theta, options);
}

BlockSpectralReport block_spectral_report_serial(const Objective& objective, const BlockedVector& theta,
                                                 const PowerIterationOptions& options) {
  return spectral_report_impl<false>(objective, theta, options);
}

double lambda_P(const BlockSpec& spec, std::span<const double> lambda) {
  check_lambda(lambda, spec.size(), "lambda_P");
  const double p = static_cast<double>(spec.total_dim());
  double s = 0.0;
  for (std::size_t b = 0; b < spec.size(); ++b) s += static_cast<double>(spec.dim(b)) / p * lambda[b];
  return s;
}

double lambda_G_from_block_norms(std::span<const double> block_l2, std::span<const double> lambda) {
  check_lambda(lambda, block_l2.size(), "lambda_G");
  const double total = kernels::serial::sum_sq(block_l2);
  if (total == 0.0) throw std::domain_error("lambda_G: undefined at stationary point");
  double s = 0.0;
  for (std::size_t b = 0; b < block_l2.size(); ++b) s += block_l2[b] * block_l2[b] / total * lambda[b];
  return s;
}

double lambda_G_pointwise(const BlockedVector& g, std::span<const double> lambda) {
  std::vector<double> norms;
  for (const auto& bn : block_norms(g, Norm::L2)) norms.push_back(bn.value);
  return lambda_G_from_block_norms(norms, lambda);
}

double lambda_G_trajectory(std::span<const TrajectoryPoint> points, const BlockLambdaProvider& provider) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& p : points) {
    if (vector_norm(p.gradient, Norm::L2) == 0.0) continue;
    const auto lam = provider(p.theta);
    best = std::max(best, lambda_G_pointwise(p.gradient, lam));
    any = true;
  }
  if (!any) throw std::domain_error("lambda_G: undefined at stationary point (all points stationary)");
  return best;
}

double lambda_G_trajectory(std::span<const std::vector<double>> block_l2_rows, std::span<const double> lambda) {
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& row : block_l2_rows) {
    if (kernels::serial::sum_sq(row) == 0.0) continue;
    best = std::max(best, lambda_G_from_block_norms(row, lambda));
    any = true;
  }
  if (!any) throw std::domain_error("lambda_G: undefined at stationary point (all points stationary)");
  return best;
}

PowerIterationResult delta_D_estimate(const LinearOperator& full, const LinearOperator& block_diagonal,
                                      std::size_t dim, const PowerIterationOptions& options) {
  const LinearOperator residual = [&full, &block_diagonal, dim](std::span<const double> x, std::span<double> y) {
    std::vector<double> d(dim, 0.0);
    full(x, y);
    block_diagonal(x, d);
    for (std::size_t i = 0; i < dim; ++i) y[i] -= d[i];
  };
  return power_iteration(residual, dim, options);
}

RegionSampler box_region(BlockedVector center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("box_region: radius must be positive");
  return [center = std::move(center), radius](Rng& rng) {
    BlockedVector x = center;
    for (double& v : x.values()) v += rng.uniform(-radius, radius);
    return x;
  };
}

RhoEstimate rho_H_estimate(const Objective& objective, const RegionSampler& region, std::size_t pairs,
                           std::uint64_t seed) {
  if (pairs < 1) throw std::invalid_argument("rho_H_estimate: pair count must be at least 1");
  const auto n = static_cast<std::ptrdiff_t>(pairs);
  double best = 0.0;
#pragma omp parallel for reduction(max : best) schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(k));
    const BlockedVector a = region(rng);
    const BlockedVector b = region(rng);
    BlockedVector v = BlockedVector::zeros(objective.block_spec());
    for (double& x : v.values()) x = rng.normal();
    const double vn = vector_norm(v, Norm::L2);
    BlockedVector diff = objective.hvp(a, v);
    kernels::serial::axpy(-1.0, objective.hvp(b, v).values(), diff.values());
    BlockedVector step = a;
    kernels::serial::axpy(-1.0, b.values(), step.values());
    const double sn = vector_norm(step, Norm::L2);
    if (sn == 0.0 || vn == 0.0) continue;
    best = std::max(best, vector_norm(diff, Norm::L2) / (sn * vn));
  }
  return {best, pairs};
}

}  // namespace hetero
