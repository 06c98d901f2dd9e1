#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hetero {

/// Ordered partition of a flat parameter vector into named, contiguous blocks.
class BlockSpec {
 public:
  struct Block {
    std::string name;
    std::size_t dim;
  };

  /// Throws std::invalid_argument on an empty list, a zero-dimensional block
  /// or a duplicated name.
  explicit BlockSpec(std::vector<Block> blocks);

  static std::shared_ptr<const BlockSpec> make(std::vector<Block> blocks);
  static std::shared_ptr<const BlockSpec> single(std::string name, std::size_t dim);

  std::size_t size() const { return blocks_.size(); }
  std::size_t total_dim() const { return total_; }
  std::size_t dim(std::size_t b) const { return blocks_.at(b).dim; }
  std::size_t offset(std::size_t b) const { return offsets_.at(b); }
  const std::string& name(std::size_t b) const { return blocks_.at(b).name; }
  const std::vector<Block>& blocks() const { return blocks_; }

  /// Index of the named block; throws std::out_of_range if absent.
  std::size_t index_of(const std::string& name) const;

  bool operator==(const BlockSpec& other) const;

 private:
  std::vector<Block> blocks_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

using BlockSpecPtr = std::shared_ptr<const BlockSpec>;

/// Flat real vector together with the block partition it lives in.
/// The partition is shared and immutable; the values are owned.
class BlockedVector {
 public:
  BlockedVector(BlockSpecPtr spec, std::vector<double> values);

  static BlockedVector zeros(BlockSpecPtr spec);
  static BlockedVector filled(BlockSpecPtr spec, double value);

  const BlockSpec& spec() const { return *spec_; }
  const BlockSpecPtr& spec_ptr() const { return spec_; }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  std::span<const double> block(std::size_t b) const;
  std::span<double> block(std::size_t b);

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  /// Same partition (by value, not by pointer).
  bool compatible_with(const BlockedVector& other) const;

 private:
  BlockSpecPtr spec_;
  std::vector<double> values_;
};

enum class Norm { L1, L2, Linf };

/// Steepest-descent geometries supported by steepest_direction.
enum class SteepestNorm { L2, Linf };

struct BlockNorm {
  std::string name;
  double value;
};

/// ‖v‖_q. Throws std::domain_error("non-finite input") on NaN/Inf entries.
double vector_norm(std::span<const double> v, Norm q);
double vector_norm(const BlockedVector& v, Norm q);

/// Per-block ‖[v]_b‖_q in declaration order.
std::vector<BlockNorm> block_norms(const BlockedVector& v, Norm q);

double dot(const BlockedVector& a, const BlockedVector& b);

/// sign(x) with sign(0) = 0.
inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

BlockedVector sign_vec(const BlockedVector& v);

/// Unit-norm direction minimising gᵀΔ: -g/‖g‖₂ for L2, -sign(g) for Linf.
/// Throws std::domain_error("zero gradient") for g = 0 under L2.
BlockedVector steepest_direction(const BlockedVector& g, SteepestNorm norm);

/// θ - (‖g‖₁ / L_inf) · sign(g): the exact minimiser of the l∞-smooth upper model.
BlockedVector linf_steepest_update(const BlockedVector& theta, const BlockedVector& g, double l_inf);

/// Uniform draw from the unit sphere of the parameter space (normalized
/// standard Gaussian from hetero::Rng(seed)).
BlockedVector unit_sphere_point(BlockSpecPtr spec, std::uint64_t seed);

/// Throws std::invalid_argument with `what` if the partitions differ.
void require_compatible(const BlockedVector& a, const BlockedVector& b, const char* what);

}  // namespace hetero
