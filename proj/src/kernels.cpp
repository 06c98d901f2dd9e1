#include "hetero/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <omp.h>

namespace hetero::kernels {
namespace {

constexpr std::size_t kLeaf = 16;

template <typename F>
double pairwise(F&& term, std::size_t lo, std::size_t hi) {
  if (hi - lo <= kLeaf) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    return s;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise(term, lo, mid) + pairwise(term, mid, hi);
}

double combine(const std::vector<double>& partials, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return partials[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return combine(partials, lo, mid) + combine(partials, mid, hi);
}

template <bool Parallel, typename F>
double chunked_reduce(std::size_t n, F&& term) {
  if (n == 0) return 0.0;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  if (chunks == 1) return pairwise(term, 0, n);

  std::vector<double> partials(chunks);
  const auto fill = [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    partials[c] = pairwise(term, lo, std::min(n, lo + kChunk));
  };
  if constexpr (Parallel) {
    const auto count = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
    for (std::ptrdiff_t c = 0; c < count; ++c) fill(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < chunks; ++c) fill(c);
  }
  return combine(partials, 0, chunks);
}

template <bool Parallel>
double max_abs_impl(std::span<const double> x) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  double m = 0.0;
  if constexpr (Parallel) {
#pragma omp parallel for reduction(max : m) schedule(static) if (x.size() >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i]));
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) m = std::max(m, std::abs(x[i]));
  }
  return m;
}

template <bool Parallel>
bool all_finite_impl(std::span<const double> x) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  int ok = 1;
  if constexpr (Parallel) {
#pragma omp parallel for reduction(&& : ok) schedule(static) if (x.size() >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i) ok = ok && std::isfinite(x[i]);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) ok = ok && std::isfinite(x[i]);
  }
  return ok != 0;
}

template <bool Parallel>
void axpy_impl(double a, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if constexpr (Parallel) {
#pragma omp parallel for schedule(static) if (x.size() >= kParallelThreshold)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += a * x[i];
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += a * x[i];
  }
}

void check_same_length(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: length mismatch");
}

}  // namespace

double sum(std::span<const double> x) {
  return chunked_reduce<true>(x.size(), [x](std::size_t i) { return x[i]; });
}
double sum_abs(std::span<const double> x) {
  return chunked_reduce<true>(x.size(), [x](std::size_t i) { return std::abs(x[i]); });
}
double sum_sq(std::span<const double> x) {
  return chunked_reduce<true>(x.size(), [x](std::size_t i) { return x[i] * x[i]; });
}
double dot(std::span<const double> x, std::span<const double> y) {
  check_same_length(x, y);
  return chunked_reduce<true>(x.size(), [x, y](std::size_t i) { return x[i] * y[i]; });
}
double max_abs(std::span<const double> x) { return max_abs_impl<true>(x); }
bool all_finite(std::span<const double> x) { return all_finite_impl<true>(x); }
void axpy(double a, std::span<const double> x, std::span<double> y) { axpy_impl<true>(a, x, y); }

namespace serial {

double sum(std::span<const double> x) {
  return chunked_reduce<false>(x.size(), [x](std::size_t i) { return x[i]; });
}
double sum_abs(std::span<const double> x) {
  return chunked_reduce<false>(x.size(), [x](std::size_t i) { return std::abs(x[i]); });
}
double sum_sq(std::span<const double> x) {
  return chunked_reduce<false>(x.size(), [x](std::size_t i) { return x[i] * x[i]; });
}
double dot(std::span<const double> x, std::span<const double> y) {
  check_same_length(x, y);
  return chunked_reduce<false>(x.size(), [x, y](std::size_t i) { return x[i] * y[i]; });
}
double max_abs(std::span<const double> x) { return max_abs_impl<false>(x); }
bool all_finite(std::span<const double> x) { return all_finite_impl<false>(x); }
void axpy(double a, std::span<const double> x, std::span<double> y) { axpy_impl<false>(a, x, y); }

}  // namespace serial

}  // namespace hetero::kernels
