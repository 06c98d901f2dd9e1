#pragma once

#include <cstddef>
#include <span>

// Reduction and update kernels over flat double arrays.
//
// Every reduction uses the same fixed decomposition: the input is cut into
// chunks of kChunk elements, each chunk is summed pairwise, and the chunk
// partials are combined pairwise in index order. The OpenMP kernels only
// distribute chunks across threads, so they return bit-identical results to
// the serial reference in hetero::kernels::serial regardless of thread count.

namespace hetero::kernels {

inline constexpr std::size_t kChunk = 2048;

/// Inputs shorter than this run on the calling thread.
inline constexpr std::size_t kParallelThreshold = 4 * kChunk;

double sum(std::span<const double> x);
double sum_abs(std::span<const double> x);
double sum_sq(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double max_abs(std::span<const double> x);
bool all_finite(std::span<const double> x);

/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

namespace serial {

double sum(std::span<const double> x);
double sum_abs(std::span<const double> x);
double sum_sq(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double max_abs(std::span<const double> x);
bool all_finite(std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);

}  // namespace serial

}  // namespace hetero::kernels
