#include <cmath>

#include "doctest.h"
#include "marimpute/errors.hpp"
#include "marimpute/fcs.hpp"
#include "marimpute/mechanisms.hpp"
#include "stats_helpers.hpp"

using namespace marimpute;
using marimpute::models::ModelKind;
using marimpute::models::ModelSpec;

namespace {

IncompleteData observe(const GeneratedSample& g) { return apply_mask(g.x, g.mask); }

fcs::FcsConfig config_for(ModelKind kind, std::uint64_t seed, std::size_t iterations = 10) {
  fcs::FcsConfig cfg;
  cfg.models = {ModelSpec{kind, {}, {}}};
  cfg.seed = seed;
  cfg.iterations = iterations;
  return cfg;
}

std::vector<double> imputed_cells(const CompletedDataset& c, std::size_t j) {
  std::vector<double> v;
  for (std::size_t i = 0; i < c.rows(); ++i)
    if (c.source_mask().missing(i, j)) v.push_back(c(i, j));
  return v;
}

double normal_cdf(double x, double mean, double var) { return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * var)); }

}  // namespace

TEST_CASE("complete data needs no fits") {
  const DataMatrix x(Matrix(5, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  const auto data = apply_mask(x, MissingMask(5, 2));
  const auto run = fcs::impute(data, config_for(ModelKind::cart_sample, 1));
  CHECK(run.model_fits == 0);
  CHECK(run.completed.at(0).values().values() == x.values().values());
}

TEST_CASE("fit count is sweeps times incomplete columns") {
  const auto g = generate(make_spec("ex1-uniform3"), 300, 3);
  const auto run = fcs::impute(observe(g), config_for(ModelKind::gaussian_draw, 1, 4));
  CHECK(run.model_fits == 4 * 2);
  CHECK(run.trace.size() == 4 * 2);
}

TEST_CASE("observed cells are never modified") {
  const auto g = generate(make_spec("appC-nonlinear6"), 600, 5);
  const auto data = observe(g);
  for (auto kind : {ModelKind::gaussian_draw, ModelKind::regression_mean, ModelKind::cart_sample,
                    ModelKind::forest_sample, ModelKind::forest_mean}) {
    CAPTURE(models::to_string(kind));
    auto cfg = config_for(kind, 2, 3);
    cfg.models[0].forest.trees = 10;
    const auto run = fcs::impute(data, cfg);
    CHECK(preserves_observed(data, run.completed[0].values()));
    for (double v : run.completed[0].values().values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("gaussian-draw extrapolates the ex2 shift") {
  const auto g = generate(make_spec("ex2-gauss-shift"), 4000, 17);
  const auto run = fcs::impute(observe(g), config_for(ModelKind::gaussian_draw, 3));
  const auto cells = imputed_cells(run.completed[0], 0);
  // X1 | M = (1,0) is N(5, 2)
  CHECK(std::abs(testing_stats::mean(cells) - 5.0) < 0.3);
  CHECK(std::abs(testing_stats::variance(cells) - 2.0) < 0.5);
}

TEST_CASE("forest-sample cannot reach the ex2 shifted pattern") {
  const auto g = generate(make_spec("ex2-gauss-shift"), 4000, 17);
  auto cfg = config_for(ModelKind::forest_sample, 3);
  cfg.models[0].forest.trees = 30;
  const auto run = fcs::impute(observe(g), cfg);
  const auto cells = imputed_cells(run.completed[0], 0);
  CHECK(testing_stats::mean(cells) <= 3.5);
}

TEST_CASE("imputing with the true conditionals reproduces the ex1 uniform law") {
  const auto spec = make_spec("ex1-uniform3");
  const auto g = generate(spec, 3000, 21);
  const auto run = fcs::impute_with_truth(observe(g), config_for(ModelKind::cart_sample, 4), spec);
  for (std::size_t j : {0u, 1u}) {
    const auto cells = imputed_cells(run.completed[0], j);
    const double ks = testing_stats::ks_statistic(cells, [](double v) { return std::clamp(v, 0.0, 1.0); });
    CHECK(testing_stats::ks_pvalue(ks, cells.size()) > 0.01);
  }
}

TEST_CASE("imputation is deterministic in the seed") {
  const auto g = generate(make_spec("ex1-uniform3"), 400, 6);
  auto cfg = config_for(ModelKind::forest_sample, 99, 3);
  cfg.models[0].forest.trees = 10;
  const auto a = fcs::impute(observe(g), cfg);
  const auto b = fcs::impute(observe(g), cfg);
  CHECK(a.completed[0].values().values() == b.completed[0].values().values());
  cfg.seed = 100;
  const auto c = fcs::impute(observe(g), cfg);
  CHECK(a.completed[0].values().values() != c.completed[0].values().values());
}

TEST_CASE("chains are independent streams and chain 0 matches a single run") {
  const auto g = generate(make_spec("ex1-uniform3"), 400, 7);
  auto cfg = config_for(ModelKind::cart_sample, 5, 3);
  const auto single = fcs::impute(observe(g), cfg);
  cfg.chains = 3;
  const auto multi = fcs::impute(observe(g), cfg);
  REQUIRE(multi.completed.size() == 3);
  CHECK(multi.completed[0].values().values() == single.completed[0].values().values());
  CHECK(multi.completed[1].values().values() != multi.completed[0].values().values());
  CHECK(multi.completed[2].values().values() != multi.completed[1].values().values());
}

TEST_CASE("the true conditional leaves the ex2 truth stationary") {
  const auto spec = make_spec("ex2-gauss-shift");
  const auto g = generate(spec, 4000, 8);
  const auto data = observe(g);
  const CompletedDataset truth(fill_from(data, g.x).values(), g.mask);
  auto cfg = config_for(ModelKind::true_sampler, 9);
  const auto after = fcs::continue_chain(truth, cfg, 5, &spec);
  CHECK(preserves_observed(data, after.values()));
  const auto cells = imputed_cells(after, 0);
  const double ks = testing_stats::ks_statistic(cells, [](double v) { return normal_cdf(v, 5.0, 2.0); });
  CHECK(testing_stats::ks_pvalue(ks, cells.size()) > 0.01);
}

TEST_CASE("random visit order still imputes every column") {
  const auto g = generate(make_spec("appA-uniform5"), 500, 9);
  auto cfg = config_for(ModelKind::cart_sample, 10, 3);
  cfg.order = fcs::VisitOrder::random_per_sweep;
  const auto run = fcs::impute(observe(g), cfg);
  for (double v : run.completed[0].values().values()) CHECK_FALSE(is_na(v));
}

TEST_CASE("per-column model lists") {
  const auto g = generate(make_spec("ex1-uniform3"), 300, 11);
  auto cfg = config_for(ModelKind::cart_sample, 1, 2);
  cfg.models = {ModelSpec{ModelKind::gaussian_draw, {}, {}}, ModelSpec{ModelKind::cart_sample, {}, {}},
                ModelSpec{ModelKind::regression_mean, {}, {}}};
  CHECK_NOTHROW(fcs::impute(observe(g), cfg));
  cfg.models.pop_back();
  CHECK_THROWS_AS(fcs::impute(observe(g), cfg), ConfigError);
}

TEST_CASE("configuration and data errors") {
  const auto g = generate(make_spec("ex1-uniform3"), 100, 12);
  auto cfg = config_for(ModelKind::cart_sample, 1);
  cfg.iterations = 0;
  CHECK_THROWS_AS(fcs::impute(observe(g), cfg), ConfigError);
  cfg = config_for(ModelKind::cart_sample, 1);
  cfg.chains = 0;
  CHECK_THROWS_AS(fcs::impute(observe(g), cfg), ConfigError);

  MissingMask all(4, 2);
  for (std::size_t i = 0; i < 4; ++i) all.set(i, 0, true);
  const auto empty_column = apply_mask(DataMatrix(Matrix(4, 2, 1.0)), all);
  CHECK_THROWS_AS(fcs::impute(empty_column, config_for(ModelKind::cart_sample, 1)), DataError);

  // the true sampler needs a mechanism for every incomplete column
  CHECK_THROWS_AS(fcs::impute(observe(g), config_for(ModelKind::true_sampler, 1)), UnsupportedError);
  const auto spec = make_spec("appB-gaussmix6");
  auto b = generate(spec, 300, 13);
  b.mask.set(0, 4, true);
  CHECK_THROWS_AS(fcs::impute(observe(b), config_for(ModelKind::true_sampler, 1), &spec), UnsupportedError);
}

TEST_CASE("sparse columns produce a warning") {
  Matrix x(30, 2);
  MissingMask m(30, 2);
  for (std::size_t i = 0; i < 30; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = static_cast<double>(i % 7);
    if (i >= 6) m.set(i, 0, true);
  }
  const auto run = fcs::impute(apply_mask(DataMatrix(x), m), config_for(ModelKind::gaussian_draw, 1, 2));
  REQUIRE(run.warnings.size() == 1);
  CHECK(run.warnings[0].find("column 1") != std::string::npos);
}
