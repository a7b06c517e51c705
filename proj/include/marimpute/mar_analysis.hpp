#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marimpute/mechanisms.hpp"
#include "marimpute/quadrature.hpp"

namespace marimpute::analysis {

enum class Condition { sm_mar_ii, pmm_mar, cimar, emar, mcar, rmar, overlap, positivity };

std::string to_string(Condition c);
/// Accepts the report spelling ("SM-MAR-II", "PMM-MAR", ...), case-insensitive.
Condition parse_condition(const std::string& name);

inline constexpr double kDefaultTolerance = 1e-6;
/// Density (or probability) values at or below this are outside the support.
inline constexpr double kSupportThreshold = 1e-10;

/// Outcome of a numerical check: worst violation over the grid and where it occurs.
struct ConditionReport {
  Condition condition = Condition::pmm_mar;
  bool passed = false;
  double max_violation = 0.0;
  double tolerance = kDefaultTolerance;
  std::vector<double> witness;
  std::string detail;
};

/// p(x_S | x_{S^c}, M = patterns[k]) for a fixed mechanism, pattern and block S.
class PatternConditional {
 public:
  PatternConditional(const MechanismSpec& spec, std::size_t pattern, std::vector<std::size_t> block,
                     const GridSpec& grid);

  std::size_t pattern() const { return pattern_; }
  const std::vector<std::size_t>& block() const { return block_; }

  /// Bayes route: P(m|x) p(x) normalized over x_S by quadrature.
  double density(std::span<const double> x) const;
  /// Ratio route: p(x_S | x_{S^c}) * P(m | x) / P(m | x_{S^c}).
  double density_via_ratio(std::span<const double> x) const;
  /// Quadrature of `density` over x_S with x_{S^c} taken from `x`.
  double total_mass(std::span<const double> x) const;

 private:
  template <class F>
  double sum_over_block(std::span<const double> x, F&& integrand) const;

  const MechanismSpec* spec_;
  std::size_t pattern_;
  std::vector<std::size_t> block_;
  std::vector<Nodes1D> axes_;
};

PatternConditional pattern_conditional(const MechanismSpec& spec, std::size_t pattern,
                                       std::vector<std::size_t> block, const GridSpec& grid);

/// Checks one of the MAR-family conditions (or OVERLAP over all columns, or POSITIVITY).
ConditionReport check_condition(const MechanismSpec& spec, Condition condition, const GridSpec& grid,
                                double tol = kDefaultTolerance);

/// OVERLAP for column j, or POSITIVITY when `condition` is Condition::positivity.
ConditionReport check_overlap(const MechanismSpec& spec, std::size_t j, const GridSpec& grid,
                              Condition condition = Condition::overlap, double tol = kDefaultTolerance);

/// Mixture over the patterns observing x_j of the per-pattern conditionals of x_j,
/// weighted by p(x_{-j} | M = m) P(M = m). Throws std::domain_error outside the
/// observed-pattern support of x_{-j}.
double hstar_oracle(const MechanismSpec& spec, std::size_t j, std::span<const double> x, const GridSpec& grid);

struct WeightExistenceResult {
  double residual = 0.0;               // max over the conditioning grid of the L2 gap
  std::vector<std::size_t> donors;     // pattern indices observing the masked block
  std::vector<double> weights;         // simplex weights at the worst conditioning point
  std::vector<double> witness;         // conditioning values at the worst point
};

/// For pattern k: can a simplex mixture of donor-pattern conditionals reproduce
/// p(o^c(x) | o(x)) at every conditioning point of the grid?
WeightExistenceResult weight_existence(const MechanismSpec& spec, std::size_t pattern, const GridSpec& grid);

/// Least squares over the probability simplex: min_w w'Gw - 2 b'w. Projected
/// gradient with restarts followed by an exact solve on the detected support.
std::vector<double> simplex_least_squares(const std::vector<std::vector<double>>& gram,
                                          const std::vector<double>& rhs);

struct FactorStep {
  std::size_t variable = 0;
  PatternBits preceding;                    // values of the previously visited indicators
  std::vector<std::size_t> masked_dependencies;
  double max_variation = 0.0;
  bool passed = true;
};

struct FactorCheckReport {
  bool passed = true;
  std::vector<std::size_t> permutation;
  std::vector<FactorStep> steps;
};

/// Sequential factorization P(M|X) = prod_k P(M_pi(k) | M_pi(<k), X): flags every
/// factor that varies with a coordinate not known to be observed at that step.
FactorCheckReport graphical_factor_check(const MechanismSpec& spec, std::span<const std::size_t> permutation,
                                         const GridSpec& grid, double tol = kDefaultTolerance);

}  // namespace marimpute::analysis
