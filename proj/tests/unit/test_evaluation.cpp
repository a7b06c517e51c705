#include <cmath>

#include "doctest.h"
#include "marimpute/errors.hpp"
#include "marimpute/evaluation.hpp"
#include "marimpute/fcs.hpp"
#include "marimpute/mechanisms.hpp"

using namespace marimpute;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = standard_normal(rng);
  return m;
}

/// Textbook double loop over the three expectations.
double energy_oracle(const Matrix& a, const Matrix& b) {
  auto dist = [](std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) s += (u[c] - v[c]) * (u[c] - v[c]);
    return std::sqrt(s);
  };
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < b.rows(); ++k) xy += dist(a.row(i), b.row(k));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.rows(); ++k) xx += dist(a.row(i), a.row(k));
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t k = 0; k < b.rows(); ++k) yy += dist(b.row(i), b.row(k));
  const double n = static_cast<double>(a.rows());
  const double m = static_cast<double>(b.rows());
  return 2.0 * xy / (n * m) - xx / (n * n) - yy / (m * m);
}

}  // namespace

TEST_CASE("energy distance of a sample with itself is exactly zero") {
  Rng rng(1);
  const auto a = random_matrix(rng, 40, 3);
  CHECK(eval::energy_distance(a, a) == 0.0);
  const Matrix copy = a;
  CHECK(eval::energy_distance(a, copy) == 0.0);
}

TEST_CASE("energy distance between two points") {
  CHECK(eval::energy_distance(Matrix(1, 1, {0.0}), Matrix(1, 1, {1.0})) == 2.0);
  // |(0,0) - (3,4)| = 5
  CHECK(eval::energy_distance(Matrix(1, 2, {0.0, 0.0}), Matrix(1, 2, {3.0, 4.0})) == 10.0);
}

TEST_CASE("energy distance matches the double-loop oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_matrix(rng, 20, 3);
    const auto b = random_matrix(rng, 15, 3);
    CHECK(eval::energy_distance(a, b) == doctest::Approx(energy_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("energy distance is symmetric bit for bit") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_matrix(rng, 25, 2);
    const auto b = random_matrix(rng, 25, 2);
    CHECK(eval::energy_distance(a, b) == eval::energy_distance(b, a));
  }
}

TEST_CASE("energy distance scales with the data") {
  Rng rng(4);
  const auto a = random_matrix(rng, 12, 2);
  const auto b = random_matrix(rng, 9, 2);
  const double base = eval::energy_distance(a, b);
  for (double c : {0.25, 2.0, 8.0}) {
    Matrix ca = a, cb = b;
    for (std::size_t i = 0; i < ca.rows(); ++i)
      for (std::size_t j = 0; j < 2; ++j) ca(i, j) *= c;
    for (std::size_t i = 0; i < cb.rows(); ++i)
      for (std::size_t j = 0; j < 2; ++j) cb(i, j) *= c;
    // powers of two scale every distance without rounding
    CHECK(eval::energy_distance(ca, cb) == c * base);
  }
}

TEST_CASE("energy distance input errors") {
  CHECK_THROWS_AS(eval::energy_distance(Matrix(0, 2), Matrix(3, 2)), DataError);
  CHECK_THROWS_AS(eval::energy_distance(Matrix(2, 2), Matrix(3, 3)), DataError);
}

TEST_CASE("rmse counts only the masked cells") {
  const DataMatrix truth(Matrix(2, 2, {1, 2, 3, 4}));
  MissingMask m(2, 2);
  m.set(0, 1, true);
  m.set(1, 0, true);
  const CompletedDataset c(Matrix(2, 2, {100, 5, 0, -50}), m);
  // errors 3 and -3
  CHECK(eval::rmse(c, truth) == doctest::Approx(3.0));
  CHECK_THROWS_AS(eval::rmse(CompletedDataset(truth.values(), MissingMask(2, 2)), truth), DataError);
}

TEST_CASE("standardization maps the extremes to the ends of the interval") {
  const std::vector<double> raw{-4.0, -2.0};
  const auto s = eval::standardize(raw);
  CHECK(s[0] == doctest::Approx(-1.0 + eval::kStandardizeEpsilon));
  CHECK(s[1] == doctest::Approx(-eval::kStandardizeEpsilon));
  const std::vector<double> same{3.0, 3.0, 3.0};
  for (double v : eval::standardize(same)) CHECK(v == -0.5);
}

TEST_CASE("standardization of a three method table") {
  // negated energies of three methods over two repetitions, pooled
  const std::vector<double> raw{-0.1, -0.3, -0.5, -0.2, -0.4, -0.5};
  const auto s = eval::standardize(raw, 0.0);
  const std::vector<double> expected{0.0, -0.5, -1.0, -0.25, -0.75, -1.0};
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(s[i] == doctest::Approx(expected[i]));
}

TEST_CASE("type 7 quantile") {
  CHECK(eval::quantile({1, 2, 3, 4, 5}, 0.1) == doctest::Approx(1.4));
  CHECK(eval::quantile({5, 1, 4, 2, 3}, 0.5) == doctest::Approx(3.0));
  CHECK(eval::quantile({7}, 0.3) == 7.0);
  CHECK_THROWS_AS(eval::quantile({1, 2}, 0.0), ConfigError);
  CHECK_THROWS_AS(eval::quantile({}, 0.5), DataError);
}

TEST_CASE("observed-only quantile under ex-fgm3 is biased upward") {
  MechanismParams p;
  p.d = 5;
  const auto g = generate(make_spec("ex-fgm3", p), 20000, 5);
  const double q = eval::observed_only_quantile(apply_mask(g.x, g.mask), 0, 0.1);
  // X1 | M1 = 0 has density (7 + x) / 7.5, so Q(0.1) = -7 + sqrt(50.5)
  CHECK(std::abs(q - (-7.0 + std::sqrt(50.5))) < 0.01);
  CHECK(q > 0.1);
}

TEST_CASE("downstream quantile reads the completed column") {
  MissingMask m(5, 1);
  m.set(0, 0, true);
  const CompletedDataset c(Matrix(5, 1, {5, 1, 4, 2, 3}), m);
  CHECK(eval::quantile_downstream(c, 0, 0.5) == doctest::Approx(3.0));
  CHECK_THROWS_AS(eval::quantile_downstream(c, 1, 0.5), ConfigError);
}

TEST_CASE("mean imputation by forest has lower rmse than cart sampling on ex1") {
  const auto spec = make_spec("ex1-uniform3");
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = generate(spec, 600, seed);
    const auto data = apply_mask(g.x, g.mask);
    fcs::FcsConfig cfg;
    cfg.seed = seed;
    cfg.iterations = 3;
    cfg.models = {models::ModelSpec{models::ModelKind::forest_mean, {}, {}}};
    cfg.models[0].forest.trees = 30;
    const double forest = eval::rmse(fcs::impute(data, cfg).completed[0], g.x);
    cfg.models = {models::ModelSpec{models::ModelKind::cart_sample, {}, {}}};
    const double cart = eval::rmse(fcs::impute(data, cfg).completed[0], g.x);
    if (forest < cart) ++wins;
  }
  CHECK(wins == 10);
}
