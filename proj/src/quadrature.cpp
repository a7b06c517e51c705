#include "marimpute/quadrature.hpp"

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>

#include "marimpute/errors.hpp"

namespace marimpute::analysis {

Nodes1D gauss_legendre_nodes(std::size_t n, double lo, double hi) {
  // boost returns the nonnegative roots of P_n in increasing order
  const auto positive = boost::math::legendre_p_zeros<double>(static_cast<int>(n));
  std::vector<double> roots;
  for (auto it = positive.rbegin(); it != positive.rend(); ++it)
    if (*it != 0.0) roots.push_back(-*it);
  roots.insert(roots.end(), positive.begin(), positive.end());

  Nodes1D out;
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  for (double r : roots) {
    const double dp = boost::math::legendre_p_prime(static_cast<int>(n), r);
    out.x.push_back(mid + half * r);
    out.w.push_back(half * 2.0 / ((1.0 - r * r) * dp * dp));
  }
  return out;
}

Nodes1D midpoint_nodes(std::size_t n, double lo, double hi) {
  Nodes1D out;
  const double h = (hi - lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.x.push_back(lo + (static_cast<double>(i) + 0.5) * h);
    out.w.push_back(h);
  }
  return out;
}

GridSpec GridSpec::for_spec(const MechanismSpec& spec, std::size_t nodes_per_dim) {
  GridSpec g;
  g.nodes.assign(spec.d, nodes_per_dim);
  g.lo = spec.support.lo;
  g.hi = spec.support.hi;
  g.rule = spec.support.smooth ? QuadratureRule::gauss_legendre : QuadratureRule::midpoint;
  return g;
}

void GridSpec::validate(std::size_t d) const {
  if (nodes.size() != d || lo.size() != d || hi.size() != d)
    throw ConfigError("grid dimension does not match mechanism dimension");
  for (std::size_t j = 0; j < d; ++j) {
    if (nodes[j] < 8) throw ConfigError("grid needs at least 8 nodes per dimension");
    if (!(hi[j] > lo[j])) throw ConfigError("grid range must be nonempty");
  }
}

TensorGrid::TensorGrid(const MechanismSpec& spec, const GridSpec& grid) {
  if (!spec.has_density()) throw UnsupportedError(spec.id + " exposes no analytic density");
  grid.validate(spec.d);
  for (std::size_t j = 0; j < spec.d; ++j)
    axes_.push_back(grid.rule == QuadratureRule::gauss_legendre
                        ? gauss_legendre_nodes(grid.nodes[j], grid.lo[j], grid.hi[j])
                        : midpoint_nodes(grid.nodes[j], grid.lo[j], grid.hi[j]));
  stride_.assign(spec.d, 1);
  std::size_t total = 1;
  for (std::size_t j = spec.d; j-- > 0;) {
    stride_[j] = total;
    total *= axes_[j].x.size();
  }
  constexpr std::size_t kMaxPoints = std::size_t{1} << 24;
  if (total > kMaxPoints) throw UnsupportedError("quadrature grid too large for " + spec.id);

  density_.resize(total);
  prob_.assign(spec.patterns.size(), std::vector<double>(total));
  std::vector<double> x(spec.d);
  for (std::size_t idx = 0; idx < total; ++idx) {
    for (std::size_t j = 0; j < spec.d; ++j) x[j] = axes_[j].x[coordinate(idx, j)];
    density_[idx] = spec.density(x);
    for (std::size_t k = 0; k < spec.patterns.size(); ++k) prob_[k][idx] = spec.prob(k, x);
  }
}

std::vector<double> TensorGrid::point(std::size_t index) const {
  std::vector<double> x(dims());
  for (std::size_t j = 0; j < dims(); ++j) x[j] = axes_[j].x[coordinate(index, j)];
  return x;
}

double TensorGrid::block_weight(std::size_t index, std::span<const std::size_t> block) const {
  double w = 1.0;
  for (auto j : block) w *= axes_[j].w[coordinate(index, j)];
  return w;
}

std::vector<double> TensorGrid::integrate_block(std::span<const double> values,
                                                std::span<const std::size_t> block) const {
  // Accumulate into the representative point whose block coordinates are zero.
  std::vector<double> acc(size(), 0.0);
  auto base_of = [&](std::size_t idx) {
    std::size_t b = idx;
    for (auto j : block) b -= coordinate(idx, j) * stride_[j];
    return b;
  };
  for (std::size_t idx = 0; idx < size(); ++idx) acc[base_of(idx)] += block_weight(idx, block) * values[idx];
  std::vector<double> out(size());
  for (std::size_t idx = 0; idx < size(); ++idx) out[idx] = acc[base_of(idx)];
  return out;
}

std::vector<double> TensorGrid::joint_mass(std::span<const std::size_t> patterns) const {
  std::vector<double> out(size(), 0.0);
  for (std::size_t idx = 0; idx < size(); ++idx) {
    double p = 0.0;
    for (auto k : patterns) p += prob_[k][idx];
    out[idx] = p * density_[idx];
  }
  return out;
}

}  // namespace marimpute::analysis
