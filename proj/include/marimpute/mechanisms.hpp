#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "marimpute/data.hpp"
#include "marimpute/random.hpp"

namespace marimpute {

using PatternBits = std::vector<std::uint8_t>;

/// Analytic law of X_j given X_{-j}. All callbacks take the full d-vector; the
/// entry at position j is ignored by `sample` and `mean`.
struct ConditionalOracle {
  std::function<double(std::span<const double> x, Rng& rng)> sample;
  std::function<double(std::span<const double> x)> mean;
  std::function<double(std::span<const double> x)> density;
};

/// How (X, M) pairs are drawn.
enum class Construction {
  selection,        // X ~ p(x), then M ~ P(M | X)
  pattern_mixture,  // M ~ prior, then X ~ p(x | M)
  stratified,       // fixed equal row count per pattern, then X ~ p(x | M)
};

/// Axis-aligned box that carries the probability mass of X, plus whether the
/// density is smooth on it (selects the quadrature rule).
struct SupportBox {
  std::vector<double> lo;
  std::vector<double> hi;
  bool smooth = true;
};

/// A named missingness mechanism: the joint law of (X, M) in selection-model form.
struct MechanismSpec {
  std::string id;
  std::size_t d = 0;
  std::vector<PatternBits> patterns;
  Construction construction = Construction::selection;

  /// P(M = patterns[k] | X = x).
  std::function<double(std::size_t k, std::span<const double> x)> prob;
  /// Joint density p(x); empty when not available.
  std::function<double(std::span<const double> x)> density;
  SupportBox support;

  /// Selection construction: draws X into `out`.
  std::function<void(Rng& rng, std::span<double> out)> sample_x;
  /// Pattern-mixture / stratified construction: P(M = patterns[k]) and X | M draws.
  std::vector<double> pattern_prior;
  std::function<void(std::size_t k, Rng& rng, std::span<double> out)> sample_given_pattern;

  /// One entry per column; nullopt where no analytic conditional is exposed.
  std::vector<std::optional<ConditionalOracle>> conditionals;

  bool has_density() const { return static_cast<bool>(density); }
  bool has_oracle(std::size_t j) const { return j < conditionals.size() && conditionals[j].has_value(); }
  std::vector<double> probs(std::span<const double> x) const;
  std::optional<std::size_t> pattern_index(std::span<const std::uint8_t> bits) const;
};

/// Optional knobs for the parameterized catalogue entries.
struct MechanismParams {
  std::optional<std::size_t> d;     // ex-fgm3 padding / mcar-bernoulli dimension
  double p = 0.3;                   // mcar-bernoulli masking probability
  std::vector<std::size_t> columns; // mcar-bernoulli masked columns (0-based); empty = all
};

/// Names accepted by make_spec.
std::vector<std::string> mechanism_names();

/// Throws ConfigError for unknown names or invalid parameters.
MechanismSpec make_spec(const std::string& name, const MechanismParams& params = {});

struct GeneratedSample {
  DataMatrix x;
  MissingMask mask;
  std::vector<std::size_t> pattern_of_row;
  std::string spec_id;
  std::uint64_t seed = 0;
};

/// n i.i.d. rows (or n split evenly over patterns for stratified specs); deterministic in seed.
GeneratedSample generate(const MechanismSpec& spec, std::size_t n, std::uint64_t seed);

namespace fgm {

/// Density of the Farlie-Gumbel-Morgenstern copula on [0,1]^2.
double density(double x1, double x2);
/// Root in [0,1] of F(x | other) = u where F(x | v) = x + (2v - 1) x (x - 1).
double conditional_quantile(double u, double other);
double conditional_mean(double other);

/// X1 ~ U(0,1), then X2 by inverting the conditional CDF.
std::pair<double, double> sample_pair(Rng& rng);

}  // namespace fgm

}  // namespace marimpute
