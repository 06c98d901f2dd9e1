#include "hetero/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "hetero/kernels.hpp"
#include "hetero/rng.hpp"

namespace hetero {

double gini(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("gini: empty input");
  for (double x : values) {
    if (!std::isfinite(x)) throw std::invalid_argument("gini: non-finite value");
    if (x < 0.0) throw std::invalid_argument("gini: negative value");
  }
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double total = kernels::serial::sum(s);
  if (total == 0.0) throw std::domain_error("gini: degenerate distribution");
  const double n = static_cast<double>(s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += (2.0 * static_cast<double>(i + 1) - n - 1.0) * s[i];
  return acc / (n * total);
}

bool is_bias_block(const std::string& name) {
  if (name == "b" || name == "bias") return true;
  const auto ends = [&](const std::string& suffix) {
    return name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends(".bias") || ends("_bias");
}

std::vector<double> normalized_block_grad_norms(const BlockedVector& g, std::span<const std::size_t> blocks) {
  const auto& spec = g.spec();
  std::vector<std::size_t> sel(blocks.begin(), blocks.end());
  if (sel.empty())
    for (std::size_t b = 0; b < spec.size(); ++b) sel.push_back(b);
  std::vector<double> out;
  out.reserve(sel.size());
  for (std::size_t b : sel) {
    if (b >= spec.size()) throw std::invalid_argument("normalized_block_grad_norms: block index out of range");
    out.push_back(vector_norm(g.block(b), Norm::L2) / std::sqrt(static_cast<double>(spec.dim(b))));
  }
  const double total = kernels::serial::sum(out);
  if (total == 0.0) throw std::domain_error("normalized_block_grad_norms: all-zero gradient");
  for (double& x : out) x /= total;
  return out;
}

std::vector<double> layer_ratio(std::span<const double> layer_sums) {
  if (layer_sums.empty()) throw std::invalid_argument("layer_ratio: no layers");
  for (double x : layer_sums)
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("layer_ratio: layer sums must be nonnegative");
  const double total = kernels::serial::sum(layer_sums);
  if (total == 0.0) throw std::domain_error("layer_ratio: zero total");
  std::vector<double> out(layer_sums.begin(), layer_sums.end());
  for (double& x : out) x /= total;
  return out;
}

std::string layer_of(const std::string& block_name) { return block_name.substr(0, block_name.find('.')); }

double ComplexityMeasurement::threshold(std::size_t P) const {
  return std::pow(static_cast<double>(P), 1.0 / static_cast<double>(q)) * epsilon;
}

namespace {

void check_complexity_args(double epsilon, int q, std::size_t P) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("iteration_complexity: epsilon must be positive");
  if (q != 1 && q != 2) throw std::invalid_argument("iteration_complexity: q must be 1 or 2");
  if (P == 0) throw std::invalid_argument("iteration_complexity: P must be positive");
}

}  // namespace

ComplexityMeasurement iteration_complexity(std::span<const double> norms, std::size_t P, double epsilon, int q) {
  check_complexity_args(epsilon, q, P);
  ComplexityMeasurement m;
  m.epsilon = epsilon;
  m.q = q;
  m.budget = norms.size();
  const double thr = m.threshold(P);
  for (std::size_t t = 0; t < norms.size(); ++t) {
    if (norms[t] <= thr) {
      m.T = t;
      break;
    }
  }
  return m;
}

ComplexityMeasurement iteration_complexity_stochastic(std::span<const std::vector<double>> runs, std::size_t P,
                                                      double epsilon, int q) {
  check_complexity_args(epsilon, q, P);
  if (runs.empty()) throw std::invalid_argument("iteration_complexity: stochastic mode needs at least one run");
  ComplexityMeasurement m;
  m.epsilon = epsilon;
  m.q = q;
  m.mode = ComplexityMode::Stochastic;
  m.runs = runs.size();
  const double thr = m.threshold(P);

  // Hitting index of each run, or "never" within its logged points.
  std::vector<std::size_t> hit(runs.size(), std::numeric_limits<std::size_t>::max());
  std::size_t longest = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    longest = std::max(longest, runs[r].size());
    for (std::size_t t = 0; t < runs[r].size(); ++t) {
      if (runs[r][t] <= thr) {
        hit[r] = t;
        break;
      }
    }
  }
  m.budget = longest;
  const double M = static_cast<double>(runs.size());
  for (std::size_t t = 0; t < longest; ++t) {
    std::size_t above = 0;
    for (std::size_t h : hit)
      if (h > t) ++above;
    if (static_cast<double>(above) / M <= 0.5) {
      m.T = t;
      break;
    }
  }
  return m;
}

ComplexityMeasurement iteration_complexity_ensemble(const std::function<std::vector<double>(std::uint64_t)>& runner,
                                                    std::span<const std::uint64_t> seeds, std::size_t P,
                                                    double epsilon, int q) {
  std::vector<std::vector<double>> runs(seeds.size());
  const auto n = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) runs[static_cast<std::size_t>(i)] = runner(seeds[static_cast<std::size_t>(i)]);
  return iteration_complexity_stochastic(runs, P, epsilon, q);
}

NoiseEstimate noise_constants(const BlockedVector& g, std::span<const BlockedVector> minibatch_grads) {
  if (minibatch_grads.empty()) throw std::invalid_argument("noise_constants: no minibatch gradients");
  const double gn = vector_norm(g, Norm::L2);
  if (gn == 0.0) throw std::domain_error("noise_constants: zero full-batch gradient");
  const std::size_t P = g.size();
  const double M = static_cast<double>(minibatch_grads.size());

  NoiseEstimate est;
  est.draws = minibatch_grads.size();
  est.tau = 1e-8 * vector_norm(g, Norm::Linf);

  std::vector<double> sq_mean(P, 0.0);
  std::vector<double> cubes;
  cubes.reserve(minibatch_grads.size());
  std::vector<double> diff(P);
  for (const auto& gh : minibatch_grads) {
    require_compatible(g, gh, "noise_constants");
    for (std::size_t i = 0; i < P; ++i) {
      diff[i] = gh[i] - g[i];
      sq_mean[i] += diff[i] * diff[i] / M;
    }
    const double dn = std::sqrt(kernels::serial::sum_sq(diff));
    cubes.push_back(dn * dn * dn);
  }
  est.sigma3 = kernels::serial::sum(cubes) / M / (gn * gn * gn);
  for (std::size_t i = 0; i < P; ++i) {
    const double gi = std::abs(g[i]);
    if (gi <= est.tau) {
      ++est.excluded;
      continue;
    }
    est.sigma2 = std::max(est.sigma2, sq_mean[i] / (gi * gi));
  }
  return est;
}

NoiseEstimate noise_constants(const SampledObjective& objective, const BlockedVector& theta, std::size_t batch_size,
                              std::size_t draws, std::uint64_t seed) {
  const std::size_t N = objective.num_samples();
  if (batch_size < 1 || batch_size > N) throw std::invalid_argument("noise_constants: batch size must be in [1, N]");
  if (draws < 2) throw std::invalid_argument("noise_constants: need at least two draws");
  const BlockedVector g = objective.gradient(theta);

  std::vector<BlockedVector> grads(draws, g);
  const auto n = static_cast<std::ptrdiff_t>(draws);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t m = 0; m < n; ++m) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(m));
    std::vector<std::size_t> idx(N);
    for (std::size_t i = 0; i < N; ++i) idx[i] = i;
    // Partial Fisher-Yates: the first batch_size slots are the sample.
    for (std::size_t i = 0; i < batch_size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(N - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(batch_size);
    std::sort(idx.begin(), idx.end());
    grads[static_cast<std::size_t>(m)] = objective.gradient(theta, idx);
  }
  NoiseEstimate est = noise_constants(g, grads);
  est.batch_size = batch_size;
  return est;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = kernels::serial::sum(x) / n, my = kernels::serial::sum(y) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

GradHessianExport grad_hessian_pairs(const Objective& objective, const BlockedVector& theta,
                                     const BlockSpectralReport& report) {
  const BlockedVector g = objective.gradient(theta);
  const auto& spec = g.spec();
  if (report.lambda.size() != spec.size() || !theta.compatible_with(report.theta))
    throw std::invalid_argument("grad_hessian_pairs: spectral report does not match the objective");
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (theta[i] != report.theta[i]) throw std::invalid_argument("grad_hessian_pairs: report computed at another theta");

  GradHessianExport out;
  std::vector<double> lx, ly;
  for (std::size_t b = 0; b < spec.size(); ++b) {
    const double gn = vector_norm(g.block(b), Norm::L2) / std::sqrt(static_cast<double>(spec.dim(b)));
    out.pairs.push_back({spec.name(b), gn, report.lambda[b]});
    if (gn > 0.0 && report.lambda[b] > 0.0) {
      lx.push_back(std::log(gn));
      ly.push_back(std::log(report.lambda[b]));
    }
  }
  out.log_correlation = pearson(lx, ly);
  return out;
}

HeterogeneityReport heterogeneity_from_gradient(const BlockedVector& g, bool include_bias) {
  const auto& spec = g.spec();
  std::vector<std::size_t> sel;
  for (std::size_t b = 0; b < spec.size(); ++b)
    if (include_bias || !is_bias_block(spec.name(b))) sel.push_back(b);
  if (sel.empty()) throw std::invalid_argument("heterogeneity: no blocks left after excluding biases");

  HeterogeneityReport rep;
  rep.normalized_block_norms = normalized_block_grad_norms(g, sel);
  rep.gini = gini(rep.normalized_block_norms);

  std::map<std::string, std::size_t> pos;
  std::vector<double> sums;
  for (std::size_t k = 0; k < sel.size(); ++k) {
    const std::string layer = layer_of(spec.name(sel[k]));
    auto [it, fresh] = pos.emplace(layer, rep.layers.size());
    if (fresh) {
      rep.layers.push_back(layer);
      sums.push_back(0.0);
    }
    sums[it->second] += rep.normalized_block_norms[k];
  }
  rep.layer_ratios = layer_ratio(sums);
  return rep;
}

}  // namespace hetero
