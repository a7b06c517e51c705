#include "marimpute/mar_analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "marimpute/errors.hpp"

namespace marimpute::analysis {

namespace {

std::vector<std::size_t> masked_columns(const PatternBits& bits) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < bits.size(); ++j)
    if (bits[j]) out.push_back(j);
  return out;
}

std::optional<std::size_t> zero_pattern(const MechanismSpec& spec) {
  for (std::size_t k = 0; k < spec.patterns.size(); ++k)
    if (std::all_of(spec.patterns[k].begin(), spec.patterns[k].end(), [](auto b) { return b == 0; }))
      return k;
  return std::nullopt;
}

std::string bits_string(const PatternBits& b) {
  std::string s = "(";
  for (std::size_t j = 0; j < b.size(); ++j) s += (j ? "," : "") + std::to_string(int(b[j]));
  return s + ")";
}

/// Running maximum with the first grid index attaining it.
struct Worst {
  double value = 0.0;
  bool found = false;
  std::size_t index = 0;
  std::string detail;

  template <class Describe>
  void offer(double v, std::size_t idx, Describe&& describe) {
    if (!found || v > value) {
      value = v;
      index = idx;
      found = true;
      detail = describe();
    }
  }
};

ConditionReport finish(Condition c, const Worst& worst, const TensorGrid& grid, double tol) {
  ConditionReport r;
  r.condition = c;
  r.tolerance = tol;
  r.max_violation = worst.found ? worst.value : 0.0;
  r.passed = r.max_violation <= tol;
  if (worst.found) {
    r.witness = grid.point(worst.index);
    r.detail = worst.detail;
  }
  return r;
}

/// |p(x_S | x_C, M in L) / p(x_S | x_C) - 1| on the support of (x_C, M in L).
void ratio_violation(const TensorGrid& grid, const std::vector<std::size_t>& donors,
                     const std::vector<std::size_t>& block, const std::string& label, Worst& worst) {
  if (block.empty()) return;
  const auto joint = grid.joint_mass(donors);
  std::vector<double> dens(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) dens[i] = grid.density(i);
  const auto a = grid.integrate_block(joint, block);
  const auto b = grid.integrate_block(dens, block);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (grid.density(idx) <= kSupportThreshold || b[idx] <= kSupportThreshold) continue;
    if (a[idx] <= kSupportThreshold * b[idx]) continue;
    double p = 0.0;
    for (auto k : donors) p += grid.prob(k, idx);
    const double ratio = p * b[idx] / a[idx];
    worst.offer(std::abs(ratio - 1.0), idx, [&] {
      std::ostringstream os;
      os << label << ": density ratio " << ratio;
      return os.str();
    });
  }
}

/// |P(M = k | x) - P(M = k | x_C)| where C is the complement of `block`.
void probability_violation(const TensorGrid& grid, std::size_t k, const std::vector<std::size_t>& block,
                           const std::string& label, Worst& worst) {
  std::vector<double> dens(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) dens[i] = grid.density(i);
  const std::size_t one[] = {k};
  const auto joint = grid.joint_mass(one);
  const auto a = grid.integrate_block(joint, block);
  const auto b = grid.integrate_block(dens, block);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (grid.density(idx) <= kSupportThreshold || b[idx] <= kSupportThreshold) continue;
    const double averaged = a[idx] / b[idx];
    const double here = grid.prob(k, idx);
    worst.offer(std::abs(here - averaged), idx, [&] {
      std::ostringstream os;
      os << label << ": P(M=m|x) = " << here << " vs conditional average " << averaged;
      return os.str();
    });
  }
}

std::vector<std::size_t> all_columns(std::size_t d) {
  std::vector<std::size_t> v(d);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double objective(const std::vector<std::vector<double>>& g, const std::vector<double>& b,
                 const std::vector<double>& w) {
  double f = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double gw = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) gw += g[i][j] * w[j];
    f += w[i] * gw - 2.0 * b[i] * w[i];
  }
  return f;
}

std::vector<double> project_to_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (auto& x : v) x = std::max(x - theta, 0.0);
  return v;
}

}  // namespace

std::string to_string(Condition c) {
  switch (c) {
    case Condition::sm_mar_ii: return "SM-MAR-II";
    case Condition::pmm_mar: return "PMM-MAR";
    case Condition::cimar: return "CIMAR";
    case Condition::emar: return "EMAR";
    case Condition::mcar: return "MCAR";
    case Condition::rmar: return "RMAR";
    case Condition::overlap: return "OVERLAP";
    case Condition::positivity: return "POSITIVITY";
  }
  return "?";
}

Condition parse_condition(const std::string& name) {
  std::string up;
  for (char ch : name) up += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (auto c : {Condition::sm_mar_ii, Condition::pmm_mar, Condition::cimar, Condition::emar, Condition::mcar,
                 Condition::rmar, Condition::overlap, Condition::positivity})
    if (to_string(c) == up) return c;
  if (up == "SM-MAR2" || up == "SMMARII") return Condition::sm_mar_ii;
  throw ConfigError("unknown condition '" + name + "'");
}

// ---------------------------------------------------------------------------
// Pattern conditionals

PatternConditional::PatternConditional(const MechanismSpec& spec, std::size_t pattern,
                                       std::vector<std::size_t> block, const GridSpec& grid)
    : spec_(&spec), pattern_(pattern), block_(std::move(block)) {
  if (!spec.has_density()) throw UnsupportedError(spec.id + " exposes no analytic density");
  if (pattern >= spec.patterns.size()) throw ConfigError("pattern index out of range");
  grid.validate(spec.d);
  std::sort(block_.begin(), block_.end());
  for (auto j : block_) {
    if (j >= spec.d) throw ConfigError("block column out of range");
    axes_.push_back(grid.rule == QuadratureRule::gauss_legendre
                        ? gauss_legendre_nodes(grid.nodes[j], grid.lo[j], grid.hi[j])
                        : midpoint_nodes(grid.nodes[j], grid.lo[j], grid.hi[j]));
  }
  // Marginal pattern mass on the full grid.
  TensorGrid full(spec, grid);
  const std::size_t one[] = {pattern};
  const auto joint = full.joint_mass(one);
  const auto all = all_columns(spec.d);
  double mass = 0.0;
  for (std::size_t idx = 0; idx < full.size(); ++idx) mass += full.block_weight(idx, all) * joint[idx];
  if (mass <= kSupportThreshold)
    throw std::domain_error("pattern " + bits_string(spec.patterns[pattern]) + " has no mass on the grid");
}

template <class F>
double PatternConditional::sum_over_block(std::span<const double> x, F&& integrand) const {
  std::vector<double> y(x.begin(), x.end());
  std::vector<std::size_t> counter(block_.size(), 0);
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (std::size_t t = 0; t < block_.size(); ++t) {
      y[block_[t]] = axes_[t].x[counter[t]];
      w *= axes_[t].w[counter[t]];
    }
    total += w * integrand(std::span<const double>(y));
    std::size_t t = 0;
    while (t < block_.size() && ++counter[t] == axes_[t].x.size()) counter[t++] = 0;
    if (t == block_.size()) break;
  }
  return total;
}

double PatternConditional::density(std::span<const double> x) const {
  if (block_.empty()) return 1.0;
  const auto& s = *spec_;
  const std::size_t k = pattern_;
  const double norm = sum_over_block(x, [&](std::span<const double> y) { return s.prob(k, y) * s.density(y); });
  if (norm <= kSupportThreshold) throw std::domain_error("conditioning point outside the pattern's support");
  return s.prob(k, x) * s.density(x) / norm;
}

double PatternConditional::density_via_ratio(std::span<const double> x) const {
  if (block_.empty()) return 1.0;
  const auto& s = *spec_;
  const std::size_t k = pattern_;
  const double marginal = sum_over_block(x, [&](std::span<const double> y) { return s.density(y); });
  const double joint = sum_over_block(x, [&](std::span<const double> y) { return s.prob(k, y) * s.density(y); });
  if (marginal <= kSupportThreshold || joint <= kSupportThreshold)
    throw std::domain_error("conditioning point outside the pattern's support");
  const double unconditional = s.density(x) / marginal;
  const double prob_given_rest = joint / marginal;
  return unconditional * s.prob(k, x) / prob_given_rest;
}

double PatternConditional::total_mass(std::span<const double> x) const {
  if (block_.empty()) return 1.0;
  return sum_over_block(x, [&](std::span<const double> y) { return density(y); });
}

PatternConditional pattern_conditional(const MechanismSpec& spec, std::size_t pattern,
                                       std::vector<std::size_t> block, const GridSpec& grid) {
  return PatternConditional(spec, pattern, std::move(block), grid);
}

// ---------------------------------------------------------------------------
// Condition checks

ConditionReport check_condition(const MechanismSpec& spec, Condition condition, const GridSpec& grid,
                                double tol) {
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  if (condition == Condition::overlap) {
    ConditionReport worst;
    bool first = true;
    for (std::size_t j = 0; j < spec.d; ++j) {
      auto r = check_overlap(spec, j, grid, Condition::overlap, tol);
      if (first || r.max_violation > worst.max_violation) worst = r;
      first = false;
    }
    return worst;
  }
  if (condition == Condition::positivity) return check_overlap(spec, 0, grid, Condition::positivity, tol);

  TensorGrid tg(spec, grid);
  Worst worst;
  const std::size_t patterns = spec.patterns.size();
  auto name = [&](std::size_t k) { return "m" + std::to_string(k + 1) + "=" + bits_string(spec.patterns[k]); };

  switch (condition) {
    case Condition::sm_mar_ii:
      for (std::size_t k = 0; k < patterns; ++k) {
        auto block = masked_columns(spec.patterns[k]);
        if (!block.empty()) probability_violation(tg, k, block, name(k), worst);
      }
      break;
    case Condition::pmm_mar:
      for (std::size_t k = 0; k < patterns; ++k)
        ratio_violation(tg, {k}, masked_columns(spec.patterns[k]), name(k) + " in its own pattern", worst);
      break;
    case Condition::cimar:
      for (std::size_t k = 0; k < patterns; ++k)
        for (std::size_t other = 0; other < patterns; ++other)
          ratio_violation(tg, {other}, masked_columns(spec.patterns[k]), name(k) + " in pattern " + name(other),
                          worst);
      break;
    case Condition::emar: {
      auto zero = zero_pattern(spec);
      if (!zero) throw UnsupportedError("EMAR needs the fully observed pattern in " + spec.id);
      for (std::size_t k = 0; k < patterns; ++k) {
        auto block = masked_columns(spec.patterns[k]);
        ratio_violation(tg, {k}, block, name(k) + " in its own pattern", worst);
        ratio_violation(tg, {*zero}, block, name(k) + " in the complete pattern", worst);
      }
      break;
    }
    case Condition::mcar: {
      const auto all = all_columns(spec.d);
      double mass = 0.0;
      for (std::size_t idx = 0; idx < tg.size(); ++idx) mass += tg.block_weight(idx, all) * tg.density(idx);
      for (std::size_t k = 0; k < patterns; ++k) {
        double pk = 0.0;
        for (std::size_t idx = 0; idx < tg.size(); ++idx)
          pk += tg.block_weight(idx, all) * tg.density(idx) * tg.prob(k, idx);
        pk /= mass;
        for (std::size_t idx = 0; idx < tg.size(); ++idx) {
          if (tg.density(idx) <= kSupportThreshold) continue;
          const double here = tg.prob(k, idx);
          worst.offer(std::abs(here - pk), idx, [&] {
            std::ostringstream os;
            os << name(k) << ": P(M=m|x) = " << here << " vs P(M=m) = " << pk;
            return os.str();
          });
        }
      }
      break;
    }
    case Condition::rmar: {
      std::vector<std::size_t> sometimes_masked;
      for (std::size_t j = 0; j < spec.d; ++j)
        for (const auto& p : spec.patterns)
          if (p[j]) {
            sometimes_masked.push_back(j);
            break;
          }
      if (!sometimes_masked.empty())
        for (std::size_t k = 0; k < patterns; ++k)
          probability_violation(tg, k, sometimes_masked, name(k) + " given always-observed columns", worst);
      break;
    }
    default:
      throw UnsupportedError("unsupported condition");
  }
  return finish(condition, worst, tg, tol);
}

ConditionReport check_overlap(const MechanismSpec& spec, std::size_t j, const GridSpec& grid, Condition condition,
                              double tol) {
  if (j >= spec.d) throw ConfigError("column index out of range");
  TensorGrid tg(spec, grid);
  Worst worst;

  if (condition == Condition::positivity) {
    auto zero = zero_pattern(spec);
    if (!zero) throw UnsupportedError("POSITIVITY needs the fully observed pattern in " + spec.id);
    for (std::size_t idx = 0; idx < tg.size(); ++idx) {
      if (tg.density(idx) <= kSupportThreshold) continue;
      const double p0 = tg.prob(*zero, idx);
      worst.offer(p0 > kSupportThreshold ? 0.0 : 1.0, idx, [&] {
        std::ostringstream os;
        os << "P(M=0|x) = " << p0;
        return os.str();
      });
    }
    return finish(condition, worst, tg, tol);
  }
  if (condition != Condition::overlap) throw UnsupportedError("check_overlap handles OVERLAP and POSITIVITY only");

  std::vector<std::size_t> masking;
  std::vector<std::size_t> observing;
  for (std::size_t k = 0; k < spec.patterns.size(); ++k) (spec.patterns[k][j] ? masking : observing).push_back(k);

  ConditionReport report;
  report.condition = condition;
  report.tolerance = tol;
  if (masking.empty()) {
    report.passed = true;
    report.detail = "column never masked";
    return report;
  }
  const std::size_t block[] = {j};
  const auto a1 = tg.integrate_block(tg.joint_mass(masking), block);
  const auto a0 = tg.integrate_block(tg.joint_mass(observing), block);
  const auto all = all_columns(spec.d);
  const auto joint1 = tg.joint_mass(masking);
  double p_masked = 0.0;
  for (std::size_t idx = 0; idx < tg.size(); ++idx) p_masked += tg.block_weight(idx, all) * joint1[idx];

  for (std::size_t idx = 0; idx < tg.size(); ++idx) {
    if (tg.coordinate(idx, j) != 0) continue;  // one representative per x_{-j}
    if (a1[idx] <= kSupportThreshold) continue;
    const double dens_masked = a1[idx] / p_masked;
    const double v = a0[idx] <= kSupportThreshold ? dens_masked : 0.0;
    worst.offer(v, idx, [&] {
      std::ostringstream os;
      os << "column " << j + 1 << ": p(x_-j | M_j=1) = " << dens_masked << ", p(x_-j, M_j=0) mass " << a0[idx];
      return os.str();
    });
  }
  report = finish(condition, worst, tg, tol);
  if (!report.witness.empty()) report.witness.erase(report.witness.begin() + static_cast<std::ptrdiff_t>(j));
  return report;
}

// ---------------------------------------------------------------------------
// Identification

double hstar_oracle(const MechanismSpec& spec, std::size_t j, std::span<const double> x, const GridSpec& grid) {
  if (!spec.has_density()) throw UnsupportedError(spec.id + " exposes no analytic density");
  if (j >= spec.d || x.size() != spec.d) throw ConfigError("hstar_oracle: bad column or point dimension");
  grid.validate(spec.d);
  const auto axis = grid.rule == QuadratureRule::gauss_legendre
                        ? gauss_legendre_nodes(grid.nodes[j], grid.lo[j], grid.hi[j])
                        : midpoint_nodes(grid.nodes[j], grid.lo[j], grid.hi[j]);

  std::vector<double> y(x.begin(), x.end());
  double denominator = 0.0;
  double numerator = 0.0;
  const double px = spec.density(x);
  for (std::size_t k = 0; k < spec.patterns.size(); ++k) {
    if (spec.patterns[k][j]) continue;
    // weight: p(x_{-j} | M = m) P(M = m), by quadrature over x_j
    double weight = 0.0;
    for (std::size_t t = 0; t < axis.x.size(); ++t) {
      y[j] = axis.x[t];
      weight += axis.w[t] * spec.prob(k, y) * spec.density(y);
    }
    if (weight <= 0.0) continue;
    const double conditional = spec.prob(k, x) * px / weight;  // p(x_j | x_{-j}, M = m)
    numerator += weight * conditional;
    denominator += weight;
  }
  if (denominator <= kSupportThreshold)
    throw std::domain_error("x_{-j} lies outside the support of the patterns observing column " +
                            std::to_string(j + 1));
  return numerator / denominator;
}

std::vector<double> simplex_least_squares(const std::vector<std::vector<double>>& gram,
                                          const std::vector<double>& rhs) {
  const std::size_t k = rhs.size();
  if (k == 0) return {};
  if (k == 1) return {1.0};

  double lipschitz = 0.0;
  for (const auto& row : gram) {
    double s = 0.0;
    for (double v : row) s += std::abs(v);
    lipschitz = std::max(lipschitz, s);
  }
  if (lipschitz <= 0.0) return std::vector<double>(k, 1.0 / static_cast<double>(k));
  const double step = 1.0 / lipschitz;

  constexpr int kRestarts = 5;
  constexpr int kIterations = 500;
  Rng rng(0x5eed);
  std::vector<double> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < kRestarts; ++r) {
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& v : w) total += (v = std::exponential_distribution<double>(1.0)(rng));
    for (auto& v : w) v /= total;
    for (int it = 0; it < kIterations; ++it) {
      std::vector<double> next(k);
      for (std::size_t i = 0; i < k; ++i) {
        double grad = -rhs[i];
        for (std::size_t c = 0; c < k; ++c) grad += gram[i][c] * w[c];
        next[i] = w[i] - step * grad;
      }
      w = project_to_simplex(std::move(next));
    }
    const double value = objective(gram, rhs, w);
    if (value < best_value) {
      best_value = value;
      best = w;
    }
  }

  // Exact equality-constrained solve on the support found above.
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < k; ++i)
    if (best[i] > 1e-12) support.push_back(i);
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(s + 1);
  for (Eigen::Index a = 0; a < s; ++a) {
    for (Eigen::Index b = 0; b < s; ++b) kkt(a, b) = gram[support[a]][support[b]];
    kkt(a, s) = kkt(s, a) = 1.0;
    v(a) = rhs[support[a]];
  }
  v(s) = 1.0;
  const Eigen::VectorXd sol = kkt.fullPivLu().solve(v);
  if (sol.allFinite()) {
    std::vector<double> polished(k, 0.0);
    bool feasible = true;
    for (Eigen::Index a = 0; a < s; ++a) {
      if (sol(a) < 0.0) feasible = false;
      polished[support[a]] = sol(a);
    }
    if (feasible && objective(gram, rhs, polished) <= best_value) best = polished;
  }
  return best;
}

WeightExistenceResult weight_existence(const MechanismSpec& spec, std::size_t pattern, const GridSpec& grid) {
  if (pattern >= spec.patterns.size()) throw ConfigError("pattern index out of range");
  const auto block = masked_columns(spec.patterns[pattern]);
  WeightExistenceResult result;
  for (std::size_t k = 0; k < spec.patterns.size(); ++k)
    if (std::all_of(block.begin(), block.end(), [&](std::size_t j) { return spec.patterns[k][j] == 0; }))
      result.donors.push_back(k);
  if (result.donors.empty()) throw UnsupportedError("no pattern observes the masked block of the given pattern");
  if (block.empty()) {
    result.weights.assign(result.donors.size(), 0.0);
    result.weights[0] = 1.0;
    return result;
  }

  TensorGrid tg(spec, grid);
  std::vector<double> dens(tg.size());
  for (std::size_t i = 0; i < tg.size(); ++i) dens[i] = tg.density(i);
  const auto marginal = tg.integrate_block(dens, block);
  std::vector<std::vector<double>> donor_mass;
  for (auto k : result.donors) {
    const std::size_t one[] = {k};
    donor_mass.push_back(tg.integrate_block(tg.joint_mass(one), block));
  }

  // Offsets enumerating the block coordinates around a representative point.
  std::vector<std::size_t> offsets{0};
  for (auto j : block) {
    std::vector<std::size_t> next;
    for (auto o : offsets)
      for (std::size_t c = 0; c < tg.axis(j).x.size(); ++c) next.push_back(o + c * tg.stride(j));
    offsets = std::move(next);
  }

  bool first = true;
  for (std::size_t rep = 0; rep < tg.size(); ++rep) {
    if (std::any_of(block.begin(), block.end(), [&](std::size_t j) { return tg.coordinate(rep, j) != 0; }))
      continue;
    if (marginal[rep] <= kSupportThreshold) continue;
    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < result.donors.size(); ++a)
      if (donor_mass[a][rep] > kSupportThreshold * marginal[rep]) active.push_back(a);
    if (active.empty()) continue;

    const std::size_t m = active.size();
    std::vector<std::vector<double>> gram(m, std::vector<double>(m, 0.0));
    std::vector<double> rhs(m, 0.0);
    std::vector<double> comp(m);
    for (auto off : offsets) {
      const std::size_t idx = rep + off;
      const double q = tg.block_weight(idx, block);
      const double target = tg.density(idx) / marginal[rep];
      for (std::size_t a = 0; a < m; ++a)
        comp[a] = tg.prob(result.donors[active[a]], idx) * tg.density(idx) / donor_mass[active[a]][rep];
      for (std::size_t a = 0; a < m; ++a) {
        rhs[a] += q * comp[a] * target;
        for (std::size_t b = 0; b < m; ++b) gram[a][b] += q * comp[a] * comp[b];
      }
    }
    const auto w = simplex_least_squares(gram, rhs);
    double gap = 0.0;
    for (auto off : offsets) {
      const std::size_t idx = rep + off;
      const double target = tg.density(idx) / marginal[rep];
      double mix = 0.0;
      for (std::size_t a = 0; a < m; ++a)
        mix += w[a] * tg.prob(result.donors[active[a]], idx) * tg.density(idx) / donor_mass[active[a]][rep];
      gap += tg.block_weight(idx, block) * (mix - target) * (mix - target);
    }
    gap = std::sqrt(gap);
    if (first || gap > result.residual) {
      first = false;
      result.residual = gap;
      result.weights.assign(result.donors.size(), 0.0);
      for (std::size_t a = 0; a < m; ++a) result.weights[active[a]] = w[a];
      result.witness.clear();
      const auto pt = tg.point(rep);
      for (std::size_t j = 0; j < spec.d; ++j)
        if (!spec.patterns[pattern][j]) result.witness.push_back(pt[j]);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sequential factorization

FactorCheckReport graphical_factor_check(const MechanismSpec& spec, std::span<const std::size_t> permutation,
                                         const GridSpec& grid, double tol) {
  if (spec.d > 3) throw UnsupportedError("graphical_factor_check supports d <= 3 only");
  std::vector<std::size_t> sorted(permutation.begin(), permutation.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted != all_columns(spec.d)) throw ConfigError("not a permutation of the columns");
  TensorGrid tg(spec, grid);

  FactorCheckReport report;
  report.permutation.assign(permutation.begin(), permutation.end());
  for (std::size_t step = 0; step < permutation.size(); ++step) {
    const std::size_t v = permutation[step];
    const std::vector<std::size_t> prev(permutation.begin(), permutation.begin() + static_cast<std::ptrdiff_t>(step));
    std::map<PatternBits, std::vector<std::size_t>> by_config;
    for (std::size_t k = 0; k < spec.patterns.size(); ++k) {
      PatternBits c;
      for (auto p : prev) c.push_back(spec.patterns[k][p]);
      by_config[c].push_back(k);
    }
    for (const auto& [config, members] : by_config) {
      std::vector<double> f(tg.size(), std::numeric_limits<double>::quiet_NaN());
      for (std::size_t idx = 0; idx < tg.size(); ++idx) {
        if (tg.density(idx) <= kSupportThreshold) continue;
        double num = 0.0;
        double den = 0.0;
        for (auto k : members) {
          den += tg.prob(k, idx);
          if (spec.patterns[k][v]) num += tg.prob(k, idx);
        }
        if (den > kSupportThreshold) f[idx] = num / den;
      }
      FactorStep fs;
      fs.variable = v;
      fs.preceding = config;
      for (std::size_t l = 0; l < spec.d; ++l) {
        bool known_observed = false;
        for (std::size_t t = 0; t < prev.size(); ++t)
          if (prev[t] == l && config[t] == 0) known_observed = true;
        if (known_observed) continue;
        std::vector<double> lo(tg.size(), std::numeric_limits<double>::infinity());
        std::vector<double> hi(tg.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t idx = 0; idx < tg.size(); ++idx) {
          if (std::isnan(f[idx])) continue;
          const std::size_t base = idx - tg.coordinate(idx, l) * tg.stride(l);
          lo[base] = std::min(lo[base], f[idx]);
          hi[base] = std::max(hi[base], f[idx]);
        }
        double variation = 0.0;
        for (std::size_t idx = 0; idx < tg.size(); ++idx)
          if (hi[idx] >= lo[idx]) variation = std::max(variation, hi[idx] - lo[idx]);
        fs.max_variation = std::max(fs.max_variation, variation);
        if (variation > tol) fs.masked_dependencies.push_back(l);
      }
      fs.passed = fs.masked_dependencies.empty();
      report.passed = report.passed && fs.passed;
      report.steps.push_back(std::move(fs));
    }
  }
  return report;
}

}  // namespace marimpute::analysis
