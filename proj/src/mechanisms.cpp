#include "marimpute/mechanisms.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "marimpute/errors.hpp"

namespace marimpute {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return kInvSqrt2Pi / sd * std::exp(-0.5 * z * z);
}

bool in_unit_cube(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

PatternBits bits(std::initializer_list<int> b, std::size_t d) {
  PatternBits out(d, 0);
  std::size_t j = 0;
  for (int v : b) out[j++] = static_cast<std::uint8_t>(v);
  return out;
}

ConditionalOracle uniform_oracle(std::size_t j) {
  return ConditionalOracle{
      [](std::span<const double>, Rng& rng) { return uniform01(rng); },
      [](std::span<const double>) { return 0.5; },
      [j](std::span<const double> x) { return (x[j] >= 0.0 && x[j] <= 1.0) ? 1.0 : 0.0; }};
}

/// Oracle for one coordinate of an FGM pair (j, other).
ConditionalOracle fgm_oracle(std::size_t j, std::size_t other) {
  return ConditionalOracle{
      [other](std::span<const double> x, Rng& rng) {
        return fgm::conditional_quantile(uniform01(rng), x[other]);
      },
      [other](std::span<const double> x) { return fgm::conditional_mean(x[other]); },
      [j, other](std::span<const double> x) {
        return (x[j] >= 0.0 && x[j] <= 1.0) ? fgm::density(x[j], x[other]) : 0.0;
      }};
}

SupportBox unit_box(std::size_t d) {
  return SupportBox{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0), true};
}

MechanismSpec uniform_selection(std::string id, std::size_t d) {
  MechanismSpec s;
  s.id = std::move(id);
  s.d = d;
  s.construction = Construction::selection;
  s.density = [](std::span<const double> x) { return in_unit_cube(x) ? 1.0 : 0.0; };
  s.support = unit_box(d);
  s.sample_x = [](Rng& rng, std::span<double> out) {
    for (auto& v : out) v = uniform01(rng);
  };
  for (std::size_t j = 0; j < d; ++j) s.conditionals.emplace_back(uniform_oracle(j));
  return s;
}

/// (X1, X2) FGM-dependent, remaining coordinates independent uniforms.
MechanismSpec fgm_selection(std::string id, std::size_t d) {
  MechanismSpec s = uniform_selection(std::move(id), d);
  s.density = [](std::span<const double> x) {
    return in_unit_cube(x) ? fgm::density(x[0], x[1]) : 0.0;
  };
  s.sample_x = [](Rng& rng, std::span<double> out) {
    auto [a, b] = fgm::sample_pair(rng);
    out[0] = a;
    out[1] = b;
    for (std::size_t j = 2; j < out.size(); ++j) out[j] = uniform01(rng);
  };
  s.conditionals[0] = fgm_oracle(0, 1);
  s.conditionals[1] = fgm_oracle(1, 0);
  return s;
}

MechanismSpec ex1_uniform3() {
  auto s = uniform_selection("ex1-uniform3", 3);
  s.patterns = {bits({0, 0, 0}, 3), bits({0, 1, 0}, 3), bits({1, 0, 0}, 3)};
  s.prob = [](std::size_t k, std::span<const double> x) {
    switch (k) {
      case 0: return 2.0 * x[0] / 3.0;
      case 1: return 2.0 / 3.0 - 2.0 * x[0] / 3.0;
      default: return 1.0 / 3.0;
    }
  };
  return s;
}

MechanismSpec app_a_uniform5() {
  auto s = uniform_selection("appA-uniform5", 5);
  s.patterns = {bits({0, 0, 0, 0, 0}, 5), bits({0, 1, 0, 0, 0}, 5), bits({1, 0, 0, 0, 0}, 5)};
  s.prob = [](std::size_t k, std::span<const double> x) {
    switch (k) {
      case 0: return x[0] / 3.0;
      case 1: return 2.0 / 3.0 - x[0] / 3.0;
      default: return 1.0 / 3.0;
    }
  };
  return s;
}

MechanismSpec ex5_uniform4() {
  auto s = uniform_selection("ex5-uniform4", 4);
  s.patterns = {bits({0, 0, 0, 0}, 4), bits({0, 0, 1, 0}, 4), bits({0, 1, 0, 0}, 4),
                bits({1, 1, 0, 0}, 4)};
  s.prob = [](std::size_t k, std::span<const double> x) {
    switch (k) {
      case 0: return (x[0] + x[1]) / 8.0;
      case 1: return 0.25 - x[1] / 8.0;
      case 2: return 0.25 - x[0] / 8.0;
      default: return 0.5;
    }
  };
  return s;
}

MechanismSpec ex_fgm4() {
  auto s = fgm_selection("ex-fgm4", 3);
  s.patterns = {bits({0, 0, 0}, 3), bits({0, 1, 0}, 3), bits({0, 0, 1}, 3), bits({1, 1, 0}, 3)};
  s.prob = [](std::size_t k, std::span<const double> x) {
    switch (k) {
      case 0: return (x[0] + x[1]) / 3.0;
      case 1: return (1.0 - x[0]) / 3.0;
      case 2: return (1.0 - x[1]) / 3.0;
      default: return 1.0 / 3.0;
    }
  };
  return s;
}

MechanismSpec ex_fgm3(std::size_t d) {
  if (d < 3) throw ConfigError("ex-fgm3 needs d >= 3");
  auto s = fgm_selection("ex-fgm3", d);
  s.patterns = {bits({0, 0, 0}, d), bits({0, 1, 0}, d), bits({1, 0, 0}, d)};
  s.prob = [](std::size_t k, std::span<const double> x) {
    switch (k) {
      case 0: return (x[0] + x[1]) / 3.0;
      case 1: return (2.0 - x[0]) / 3.0;
      default: return (1.0 - x[1]) / 3.0;
    }
  };
  return s;
}

/// Completes a pattern-mixture spec: density is the prior-weighted mixture and
/// P(M = m | x) follows by Bayes' rule.
void finish_pattern_mixture(MechanismSpec& s,
                            std::function<double(std::size_t, std::span<const double>)> pattern_density) {
  auto prior = s.pattern_prior;
  s.density = [prior, pattern_density](std::span<const double> x) {
    double total = 0.0;
    for (std::size_t k = 0; k < prior.size(); ++k) total += prior[k] * pattern_density(k, x);
    return total;
  };
  s.prob = [prior, pattern_density](std::size_t k, std::span<const double> x) {
    double total = 0.0;
    double mine = 0.0;
    for (std::size_t m = 0; m < prior.size(); ++m) {
      const double v = prior[m] * pattern_density(m, x);
      total += v;
      if (m == k) mine = v;
    }
    // outside the support the prior is returned so the closure still holds
    return total > 0.0 ? mine / total : prior[k];
  };
}

MechanismSpec ex_nonoverlap() {
  MechanismSpec s;
  s.id = "ex-nonoverlap";
  s.d = 2;
  s.construction = Construction::pattern_mixture;
  s.patterns = {bits({0, 0}, 2), bits({1, 0}, 2)};
  s.pattern_prior = {0.5, 0.5};
  s.support = SupportBox{{0.0, 0.0}, {2.0, 2.0}, false};
  auto pattern_density = [](std::size_t k, std::span<const double> x) {
    const double lo = k == 0 ? 0.0 : 1.0;
    const double hi = lo + 1.0;
    if (x[1] <= lo || x[1] > hi || x[0] < 0.0 || x[0] > x[1]) return 0.0;
    return 1.0 / x[1];
  };
  finish_pattern_mixture(s, pattern_density);
  s.sample_given_pattern = [](std::size_t k, Rng& rng, std::span<double> out) {
    out[1] = (k == 0 ? 0.0 : 1.0) + uniform01(rng);
    out[0] = out[1] * uniform01(rng);
  };
  // X1 | X2 ~ U[0, X2]; X2 | X1 has density proportional to 1/x2 on [x1, 2].
  s.conditionals.emplace_back(ConditionalOracle{
      [](std::span<const double> x, Rng& rng) { return x[1] * uniform01(rng); },
      [](std::span<const double> x) { return x[1] / 2.0; },
      [](std::span<const double> x) { return (x[0] >= 0.0 && x[0] <= x[1]) ? 1.0 / x[1] : 0.0; }});
  s.conditionals.emplace_back(ConditionalOracle{
      [](std::span<const double> x, Rng& rng) { return x[0] * std::pow(2.0 / x[0], uniform01(rng)); },
      [](std::span<const double> x) { return (2.0 - x[0]) / std::log(2.0 / x[0]); },
      [](std::span<const double> x) {
        return (x[1] >= x[0] && x[1] <= 2.0) ? 1.0 / (x[1] * std::log(2.0 / x[0])) : 0.0;
      }});
  return s;
}

MechanismSpec ex2_gauss_shift() {
  MechanismSpec s;
  s.id = "ex2-gauss-shift";
  s.d = 2;
  s.construction = Construction::pattern_mixture;
  s.patterns = {bits({0, 0}, 2), bits({1, 0}, 2)};
  s.pattern_prior = {0.5, 0.5};
  s.support = SupportBox{{-11.0, -6.0}, {16.0, 11.0}, true};
  static constexpr double kMeans[2] = {0.0, 5.0};
  // N((mu, mu), [[2,1],[1,1]]) factors as X2 ~ N(mu, 1), X1 | X2 ~ N(X2, 1).
  auto pattern_density = [](std::size_t k, std::span<const double> x) {
    return normal_pdf(x[1], kMeans[k], 1.0) * normal_pdf(x[0], x[1], 1.0);
  };
  finish_pattern_mixture(s, pattern_density);
  s.sample_given_pattern = [](std::size_t k, Rng& rng, std::span<double> out) {
    out[1] = kMeans[k] + standard_normal(rng);
    out[0] = out[1] + standard_normal(rng);
  };
  s.conditionals.emplace_back(ConditionalOracle{
      [](std::span<const double> x, Rng& rng) { return x[1] + standard_normal(rng); },
      [](std::span<const double> x) { return x[1]; },
      [](std::span<const double> x) { return normal_pdf(x[0], x[1], 1.0); }});
  // X2 | X1: per component N(mu + (x1 - mu)/2, 1/2), weights prop. to N(x1; mu, 2).
  auto component_weights = [](double x1) {
    std::array<double, 2> w{};
    for (std::size_t k = 0; k < 2; ++k) w[k] = 0.5 * normal_pdf(x1, kMeans[k], std::numbers::sqrt2);
    const double t = w[0] + w[1];
    if (t <= 0.0) return std::array<double, 2>{x1 < 2.5 ? 1.0 : 0.0, x1 < 2.5 ? 0.0 : 1.0};
    return std::array<double, 2>{w[0] / t, w[1] / t};
  };
  const double half_sd = std::sqrt(0.5);
  s.conditionals.emplace_back(ConditionalOracle{
      [component_weights, half_sd](std::span<const double> x, Rng& rng) {
        auto w = component_weights(x[0]);
        const std::size_t k = uniform01(rng) < w[0] ? 0 : 1;
        return kMeans[k] + (x[0] - kMeans[k]) / 2.0 + half_sd * standard_normal(rng);
      },
      [component_weights](std::span<const double> x) {
        auto w = component_weights(x[0]);
        double m = 0.0;
        for (std::size_t k = 0; k < 2; ++k) m += w[k] * (kMeans[k] + (x[0] - kMeans[k]) / 2.0);
        return m;
      },
      [component_weights, half_sd](std::span<const double> x) {
        auto w = component_weights(x[0]);
        double p = 0.0;
        for (std::size_t k = 0; k < 2; ++k)
          p += w[k] * normal_pdf(x[1], kMeans[k] + (x[0] - kMeans[k]) / 2.0, half_sd);
        return p;
      }});
  return s;
}

/// Gaussian mixture: observed block X_O (columns 4-6) shifts with
/// the pattern, masked block X_{O^c} = f(X_O) + N(0, 4 I).
MechanismSpec gauss_mixture6(std::string id, std::function<std::array<double, 3>(const double*)> f) {
  MechanismSpec s;
  s.id = std::move(id);
  s.d = 6;
  s.construction = Construction::stratified;
  s.patterns = {bits({1, 0, 0, 0, 0, 0}, 6), bits({0, 1, 0, 0, 0, 0}, 6), bits({0, 0, 1, 0, 0, 0}, 6)};
  s.pattern_prior = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  static constexpr double kShift[3] = {5.0, 0.0, -5.0};
  constexpr double kNoiseSd = 2.0;

  Eigen::Matrix3d cov;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cov(i, j) = std::pow(0.5, std::abs(i - j));
  const Eigen::Matrix3d chol = cov.llt().matrixL();
  const Eigen::Matrix3d precision = cov.inverse();
  const double norm = 1.0 / std::sqrt(std::pow(2.0 * std::numbers::pi, 3) * cov.determinant());

  auto observed_density = [precision, norm](std::size_t k, std::span<const double> x) {
    Eigen::Vector3d z(x[3] - kShift[k], x[4] - kShift[k], x[5] - kShift[k]);
    return norm * std::exp(-0.5 * z.dot(precision * z));
  };
  auto masked_density = [f, kNoiseSd](std::span<const double> x) {
    const auto mean = f(x.data() + 3);
    double p = 1.0;
    for (int i = 0; i < 3; ++i) p *= normal_pdf(x[i], mean[i], kNoiseSd);
    return p;
  };
  auto prior = s.pattern_prior;
  s.density = [prior, observed_density, masked_density](std::span<const double> x) {
    double t = 0.0;
    for (std::size_t k = 0; k < 3; ++k) t += prior[k] * observed_density(k, x);
    return t * masked_density(x);
  };
  // The X_{O^c} | X_O factor is common to all patterns and cancels.
  s.prob = [prior, observed_density](std::size_t k, std::span<const double> x) {
    double t = 0.0;
    double mine = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
      const double v = prior[m] * observed_density(m, x);
      t += v;
      if (m == k) mine = v;
    }
    return t > 0.0 ? mine / t : prior[k];
  };
  s.sample_given_pattern = [chol, f, kNoiseSd](std::size_t k, Rng& rng, std::span<double> out) {
    Eigen::Vector3d z(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    Eigen::Vector3d xo = chol * z;
    for (int i = 0; i < 3; ++i) out[3 + i] = xo(i) + kShift[k];
    const auto mean = f(out.data() + 3);
    for (int i = 0; i < 3; ++i) out[i] = mean[i] + kNoiseSd * standard_normal(rng);
  };
  s.support = SupportBox{std::vector<double>(6, -15.0), std::vector<double>(6, 15.0), true};
  for (std::size_t j = 0; j < 3; ++j) {
    s.conditionals.emplace_back(ConditionalOracle{
        [f, j, kNoiseSd](std::span<const double> x, Rng& rng) {
          return f(x.data() + 3)[j] + kNoiseSd * standard_normal(rng);
        },
        [f, j](std::span<const double> x) { return f(x.data() + 3)[j]; },
        [f, j, kNoiseSd](std::span<const double> x) {
          return normal_pdf(x[j], f(x.data() + 3)[j], kNoiseSd);
        }});
  }
  // X_O is never masked; no oracle is exposed for those columns.
  for (std::size_t j = 3; j < 6; ++j) s.conditionals.emplace_back(std::nullopt);
  return s;
}

MechanismSpec mcar_bernoulli(const MechanismParams& params) {
  if (!(params.p >= 0.0 && params.p <= 1.0)) throw ConfigError("mcar-bernoulli: p must lie in [0,1]");
  std::size_t d = params.d.value_or(3);
  for (auto c : params.columns) d = std::max(d, c + 1);
  std::vector<std::size_t> cols = params.columns;
  if (cols.empty())
    for (std::size_t j = 0; j < d; ++j) cols.push_back(j);
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  if (cols.size() > 16) throw ConfigError("mcar-bernoulli: at most 16 masked columns");

  auto s = uniform_selection("mcar-bernoulli", d);
  // All subsets of the masked columns, in lexicographic order of the bit vectors.
  const std::size_t count = std::size_t{1} << cols.size();
  for (std::size_t code = 0; code < count; ++code) {
    PatternBits b(d, 0);
    for (std::size_t t = 0; t < cols.size(); ++t)
      b[cols[t]] = static_cast<std::uint8_t>((code >> (cols.size() - 1 - t)) & 1U);
    s.patterns.push_back(std::move(b));
  }
  const double p = params.p;
  auto patterns = s.patterns;
  s.prob = [p, patterns, cols](std::size_t k, std::span<const double>) {
    double v = 1.0;
    for (auto c : cols) v *= patterns[k][c] ? p : 1.0 - p;
    return v;
  };
  return s;
}

}  // namespace

std::vector<double> MechanismSpec::probs(std::span<const double> x) const {
  std::vector<double> out(patterns.size());
  for (std::size_t k = 0; k < patterns.size(); ++k) out[k] = prob(k, x);
  return out;
}

std::optional<std::size_t> MechanismSpec::pattern_index(std::span<const std::uint8_t> b) const {
  for (std::size_t k = 0; k < patterns.size(); ++k)
    if (std::equal(b.begin(), b.end(), patterns[k].begin(), patterns[k].end())) return k;
  return std::nullopt;
}

std::vector<std::string> mechanism_names() {
  return {"ex1-uniform3",  "ex-nonoverlap",  "ex2-gauss-shift", "ex-fgm4",       "ex-fgm3",
          "appA-uniform5", "appB-gaussmix6", "appC-nonlinear6", "mcar-bernoulli", "ex5-uniform4"};
}

MechanismSpec make_spec(const std::string& name, const MechanismParams& params) {
  if (name == "ex1-uniform3") return ex1_uniform3();
  if (name == "ex-nonoverlap") return ex_nonoverlap();
  if (name == "ex2-gauss-shift") return ex2_gauss_shift();
  if (name == "ex-fgm4") return ex_fgm4();
  if (name == "ex-fgm3") return ex_fgm3(params.d.value_or(3));
  if (name == "appA-uniform5") return app_a_uniform5();
  if (name == "ex5-uniform4") return ex5_uniform4();
  if (name == "appB-gaussmix6")
    return gauss_mixture6("appB-gaussmix6", [](const double* xo) {
      const double lin = 0.5 * xo[0] + 1.0 * xo[1] + 1.5 * xo[2];
      return std::array<double, 3>{lin, lin, lin};
    });
  if (name == "appC-nonlinear6")
    return gauss_mixture6("appC-nonlinear6", [](const double* xo) {
      return std::array<double, 3>{xo[2] * std::sin(xo[0] * xo[1]), xo[1] > 0.0 ? xo[1] : 0.0,
                                   std::atan(xo[0]) * std::atan(xo[1])};
    });
  if (name == "mcar-bernoulli") return mcar_bernoulli(params);
  throw ConfigError("unknown mechanism '" + name + "'");
}

GeneratedSample generate(const MechanismSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("generate: n must be at least 1");
  Rng rng(seed);
  const std::size_t d = spec.d;
  Matrix x(n, d);
  std::vector<std::size_t> pattern_of_row(n);

  switch (spec.construction) {
    case Construction::selection: {
      std::vector<double> probs(spec.patterns.size());
      for (std::size_t i = 0; i < n; ++i) {
        auto row = x.row(i);
        spec.sample_x(rng, row);
        for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = spec.prob(k, row);
        pattern_of_row[i] = categorical(rng, probs);
      }
      break;
    }
    case Construction::pattern_mixture: {
      for (std::size_t i = 0; i < n; ++i) {
        pattern_of_row[i] = categorical(rng, spec.pattern_prior);
        spec.sample_given_pattern(pattern_of_row[i], rng, x.row(i));
      }
      break;
    }
    case Construction::stratified: {
      const std::size_t k_count = spec.patterns.size();
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i % k_count;
      std::sort(order.begin(), order.end());
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < n; ++i) {
        pattern_of_row[i] = order[i];
        spec.sample_given_pattern(order[i], rng, x.row(i));
      }
      break;
    }
  }

  MissingMask mask(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mask.set(i, j, spec.patterns[pattern_of_row[i]][j] != 0);

  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("X" + std::to_string(j + 1));
  return GeneratedSample{DataMatrix(std::move(x), std::move(names)), std::move(mask),
                         std::move(pattern_of_row), spec.id, seed};
}

namespace fgm {

double density(double x1, double x2) { return 1.0 + (2.0 * x1 - 1.0) * (2.0 * x2 - 1.0); }

double conditional_quantile(double u, double other) {
  // a x^2 + (1 - a) x - u = 0 with a = 2v - 1; the rationalized root avoids
  // cancellation and is the one inside [0,1] for every a in [-1,1].
  const double a = 2.0 * other - 1.0;
  const double b = 1.0 - a;
  const double disc = b * b + 4.0 * a * u;
  const double denom = b + std::sqrt(std::max(disc, 0.0));
  if (denom <= 0.0) return 0.0;
  return std::clamp(2.0 * u / denom, 0.0, 1.0);
}

double conditional_mean(double other) { return 0.5 + (other - 0.5) / 3.0; }

std::pair<double, double> sample_pair(Rng& rng) {
  const double x1 = uniform01(rng);
  return {x1, conditional_quantile(uniform01(rng), x1)};
}

}  // namespace fgm

}  // namespace marimpute
