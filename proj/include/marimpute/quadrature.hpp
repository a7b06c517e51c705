#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "marimpute/mechanisms.hpp"

namespace marimpute::analysis {

enum class QuadratureRule { gauss_legendre, midpoint };

struct Nodes1D {
  std::vector<double> x;
  std::vector<double> w;
};

Nodes1D gauss_legendre_nodes(std::size_t n, double lo, double hi);
Nodes1D midpoint_nodes(std::size_t n, double lo, double hi);

/// Tensor-product grid description.
struct GridSpec {
  std::vector<std::size_t> nodes;
  std::vector<double> lo;
  std::vector<double> hi;
  QuadratureRule rule = QuadratureRule::gauss_legendre;

  /// Covers the spec's support box; midpoint rule for non-smooth densities.
  static GridSpec for_spec(const MechanismSpec& spec, std::size_t nodes_per_dim = 32);
  void validate(std::size_t d) const;
};

/// Density and pattern probabilities tabulated on every point of a tensor grid.
/// Points are indexed in row-major order over the dimensions.
class TensorGrid {
 public:
  TensorGrid(const MechanismSpec& spec, const GridSpec& grid);

  std::size_t dims() const { return axes_.size(); }
  std::size_t size() const { return density_.size(); }
  std::size_t pattern_count() const { return prob_.size(); }
  const Nodes1D& axis(std::size_t j) const { return axes_[j]; }

  std::size_t stride(std::size_t j) const { return stride_[j]; }
  std::size_t coordinate(std::size_t index, std::size_t j) const { return (index / stride_[j]) % axes_[j].x.size(); }
  std::vector<double> point(std::size_t index) const;
  double density(std::size_t index) const { return density_[index]; }
  double prob(std::size_t k, std::size_t index) const { return prob_[k][index]; }

  /// Quadrature weight of the coordinates in `block` at this point.
  double block_weight(std::size_t index, std::span<const std::size_t> block) const;

  /// For each point, the quadrature sum of `values` over the coordinates in
  /// `block` with the remaining coordinates held fixed.
  std::vector<double> integrate_block(std::span<const double> values, std::span<const std::size_t> block) const;

  /// p(x) * P(M in patterns | x) at every point.
  std::vector<double> joint_mass(std::span<const std::size_t> patterns) const;

 private:
  std::vector<Nodes1D> axes_;
  std::vector<std::size_t> stride_;
  std::vector<double> density_;
  std::vector<std::vector<double>> prob_;
};

}  // namespace marimpute::analysis
