#include "hetero/core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "hetero/kernels.hpp"
#include "hetero/rng.hpp"

namespace hetero {

BlockSpec::BlockSpec(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw std::invalid_argument("BlockSpec: at least one block required");
  std::unordered_set<std::string> seen;
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    if (b.dim == 0) throw std::invalid_argument("BlockSpec: block '" + b.name + "' has zero dimension");
    if (!seen.insert(b.name).second) throw std::invalid_argument("BlockSpec: duplicate block name '" + b.name + "'");
    offsets_.push_back(total_);
    total_ += b.dim;
  }
}

std::shared_ptr<const BlockSpec> BlockSpec::make(std::vector<Block> blocks) {
  return std::make_shared<const BlockSpec>(std::move(blocks));
}

std::shared_ptr<const BlockSpec> BlockSpec::single(std::string name, std::size_t dim) {
  return make({{std::move(name), dim}});
}

std::size_t BlockSpec::index_of(const std::string& name) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].name == name) return b;
  throw std::out_of_range("BlockSpec: no block named '" + name + "'");
}

bool BlockSpec::operator==(const BlockSpec& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].name != other.blocks_[b].name || blocks_[b].dim != other.blocks_[b].dim) return false;
  return true;
}

BlockedVector::BlockedVector(BlockSpecPtr spec, std::vector<double> values)
    : spec_(std::move(spec)), values_(std::move(values)) {
  if (!spec_) throw std::invalid_argument("BlockedVector: null block spec");
  if (values_.size() != spec_->total_dim())
    throw std::invalid_argument("BlockedVector: length " + std::to_string(values_.size()) +
                                " does not match block spec dimension " + std::to_string(spec_->total_dim()));
}

BlockedVector BlockedVector::zeros(BlockSpecPtr spec) { return filled(std::move(spec), 0.0); }

BlockedVector BlockedVector::filled(BlockSpecPtr spec, double value) {
  const std::size_t n = spec->total_dim();
  return BlockedVector(std::move(spec), std::vector<double>(n, value));
}

std::span<const double> BlockedVector::block(std::size_t b) const {
  return std::span<const double>(values_).subspan(spec_->offset(b), spec_->dim(b));
}

std::span<double> BlockedVector::block(std::size_t b) {
  return std::span<double>(values_).subspan(spec_->offset(b), spec_->dim(b));
}

bool BlockedVector::compatible_with(const BlockedVector& other) const {
  return spec_ == other.spec_ || *spec_ == *other.spec_;
}

BlockedVector unit_sphere_point(BlockSpecPtr spec, std::uint64_t seed) {
  Rng rng(seed);
  BlockedVector v = BlockedVector::zeros(std::move(spec));
  double n2 = 0.0;
  while (n2 == 0.0) {
    for (double& x : v.values()) x = rng.normal();
    n2 = kernels::serial::sum_sq(v.values());
  }
  const double n = std::sqrt(n2);
  for (double& x : v.values()) x /= n;
  return v;
}

void require_compatible(const BlockedVector& a, const BlockedVector& b, const char* what) {
  if (!a.compatible_with(b)) throw std::invalid_argument(std::string(what) + ": block structure mismatch");
}

double vector_norm(std::span<const double> v, Norm q) {
  if (!kernels::all_finite(v)) throw std::domain_error("non-finite input");
  switch (q) {
    case Norm::L1:
      return kernels::sum_abs(v);
    case Norm::Linf:
      return kernels::max_abs(v);
    case Norm::L2: {
      const double m = kernels::max_abs(v);
      if (m == 0.0) return 0.0;
      // Rescale only when squaring could overflow or underflow.
      if (m > 1e150 || m < 1e-150) {
        std::vector<double> scaled(v.begin(), v.end());
        for (double& x : scaled) x /= m;
        return m * std::sqrt(kernels::sum_sq(scaled));
      }
      return std::sqrt(kernels::sum_sq(v));
    }
  }
  throw std::invalid_argument("vector_norm: unknown norm");
}

double vector_norm(const BlockedVector& v, Norm q) { return vector_norm(v.values(), q); }

std::vector<BlockNorm> block_norms(const BlockedVector& v, Norm q) {
  std::vector<BlockNorm> out;
  out.reserve(v.spec().size());
  for (std::size_t b = 0; b < v.spec().size(); ++b) out.push_back({v.spec().name(b), vector_norm(v.block(b), q)});
  return out;
}

double dot(const BlockedVector& a, const BlockedVector& b) {
  require_compatible(a, b, "dot");
  return kernels::dot(a.values(), b.values());
}

BlockedVector sign_vec(const BlockedVector& v) {
  BlockedVector out = v;
  for (double& x : out.values()) x = sign(x);
  return out;
}

BlockedVector steepest_direction(const BlockedVector& g, SteepestNorm norm) {
  BlockedVector out = g;
  if (norm == SteepestNorm::Linf) {
    for (double& x : out.values()) x = -sign(x);
    return out;
  }
  const double n2 = vector_norm(g, Norm::L2);
  if (n2 == 0.0) throw std::domain_error("zero gradient");
  for (double& x : out.values()) x = -x / n2;
  return out;
}

BlockedVector linf_steepest_update(const BlockedVector& theta, const BlockedVector& g, double l_inf) {
  if (!(l_inf > 0.0)) throw std::invalid_argument("linf_steepest_update: L_inf must be positive");
  require_compatible(theta, g, "linf_steepest_update");
  const double step = vector_norm(g, Norm::L1) / l_inf;
  BlockedVector out = theta;
  auto x = out.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] -= step * sign(gv[i]);
  return out;
}

}  // namespace hetero
