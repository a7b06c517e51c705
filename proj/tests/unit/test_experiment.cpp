#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "marimpute/csv.hpp"
#include "marimpute/errors.hpp"
#include "marimpute/experiment.hpp"
#include "marimpute/mechanisms.hpp"

using namespace marimpute;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "version": 1,
  "mechanism": {"name": "ex1-uniform3"},
  "n": 300,
  "repetitions": 3,
  "seed": 42,
  "fcs": {"iterations": 3},
  "methods": ["gaussian-draw", "regression-mean", {"kind": "cart-sample", "min_leaf": 3},
              {"kind": "forest-mean", "trees": 10, "label": "rf"}],
  "metrics": ["energy", "rmse"],
  "downstream": [{"task": "quantile", "column": 1, "alpha": 0.1}]
})";

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("marimpute_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = bench::parse_config(kSmallConfig);
  CHECK(cfg.mechanism == "ex1-uniform3");
  CHECK(cfg.n == 300);
  CHECK(cfg.iterations == 3);
  REQUIRE(cfg.methods.size() == 4);
  CHECK(cfg.methods[2].model.tree.min_leaf == 3);
  CHECK(cfg.methods[3].label == "rf");
  CHECK(cfg.methods[3].model.forest.trees == 10);
  REQUIRE(cfg.downstream.size() == 1);
  CHECK(cfg.downstream[0].column == 0);
  CHECK(cfg.downstream[0].name() == "quantile_X1_0.1");
  // serialization round trip
  const auto again = bench::parse_config(bench::to_json(cfg));
  CHECK(bench::to_json(again) == bench::to_json(cfg));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(bench::parse_config(R"({"mechanism": "ex1-uniform3", "methods": ["cart-sample"]})"), ConfigError);
  CHECK_THROWS_AS(bench::parse_config(R"({"version": 2, "mechanism": "ex1-uniform3", "methods": ["cart-sample"]})"),
                  ConfigError);
  CHECK_THROWS_AS(
      bench::parse_config(R"({"version": 1, "mechanism": "ex1-uniform3", "methods": ["cart-sample"], "colour": 1})"),
      ConfigError);
  CHECK_THROWS_AS(bench::parse_config(R"({"version": 1, "mechanism": "ex1-uniform3", "methods": ["mice-gain"]})"),
                  ConfigError);
  CHECK_THROWS_AS(bench::parse_config(R"({"version": 1, "mechanism": "ex1-uniform3", "methods": []})"), ConfigError);
  CHECK_THROWS_AS(bench::parse_config(R"({"version": 1, "mechanism": "ex1-uniform3",
                                          "methods": ["cart-sample", "cart-sample"]})"),
                  ConfigError);
  CHECK_THROWS_AS(bench::parse_config(R"({"version": 1, "mechanism": "ex1-uniform3", "methods": ["cart-sample"],
                                          "downstream": [{"column": 0, "alpha": 0.1}]})"),
                  ConfigError);
  CHECK_THROWS_AS(bench::parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(bench::load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("shipped configs parse") {
  for (const auto& entry : fs::directory_iterator("configs")) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(bench::load_config(entry.path()));
  }
}

TEST_CASE("experiments are deterministic and rank by mean score") {
  const auto cfg = bench::parse_config(kSmallConfig);
  const auto a = bench::run_experiment(cfg);
  const auto b = bench::run_experiment(cfg);
  REQUIRE(a.scores.size() == 12);
  for (std::size_t k = 0; k < a.scores.size(); ++k) {
    CHECK(a.scores[k].ok);
    CHECK(a.scores[k].observed_preserved);
    CHECK(a.scores[k].values == b.scores[k].values);
  }
  for (const auto* metric : {"energy", "rmse"}) {
    CAPTURE(metric);
    std::vector<std::string> expected;
    for (const auto& m : cfg.methods) expected.push_back(m.label);
    std::stable_sort(expected.begin(), expected.end(),
                     [&](const auto& x, const auto& y) { return a.mean(x, metric) < a.mean(y, metric); });
    CHECK(a.ranking.at(metric) == expected);
  }
  CHECK(a.scores[0].values.count("quantile_X1_0.1") == 1);
  for (const auto& e : a.standardized) {
    CHECK(e.value >= -1.0);
    CHECK(e.value <= 0.0);
  }
}

TEST_CASE("jobs do not change the scores") {
  auto cfg = bench::parse_config(kSmallConfig);
  const auto serial = bench::run_experiment(cfg);
  cfg.jobs = 3;
  const auto parallel = bench::run_experiment(cfg);
  REQUIRE(serial.scores.size() == parallel.scores.size());
  for (std::size_t k = 0; k < serial.scores.size(); ++k) CHECK(serial.scores[k].values == parallel.scores[k].values);
}

TEST_CASE("a failing method does not disturb the others") {
  // external data carries no mechanism, so the true sampler cannot run
  const auto dir = scratch("isolation");
  const auto g = generate(make_spec("ex1-uniform3"), 200, 3);
  csv::write(dir / "complete.csv", g.x.values(), g.x.column_names());
  csv::write(dir / "incomplete.csv", apply_mask(g.x, g.mask).values(), g.x.column_names());
  auto cfg = bench::parse_config(R"({
    "version": 1, "mechanism": {"name": "external", "complete": "c", "incomplete": "i"}, "repetitions": 2,
    "seed": 3, "fcs": {"iterations": 2}, "methods": ["true-sampler", "gaussian-draw"]})");
  cfg.external = bench::ExternalData{dir / "complete.csv", dir / "incomplete.csv"};
  const auto with_failure = bench::run_experiment(cfg);
  // method seeds follow the list position, so swap in a working method rather than dropping one
  cfg.methods[0] = bench::MethodConfig{"regression-mean", {models::ModelKind::regression_mean, {}, {}}};
  const auto alone = bench::run_experiment(cfg);
  REQUIRE(with_failure.scores.size() == 4);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& failed = with_failure.scores[2 * r];
    CHECK_FALSE(failed.ok);
    CHECK(failed.error.find("analytic") != std::string::npos);
    CHECK(with_failure.scores[2 * r + 1].ok);
    CHECK(with_failure.scores[2 * r + 1].values == alone.scores[2 * r + 1].values);
  }
  CHECK(std::isnan(with_failure.mean("true-sampler", "energy")));
  CHECK(with_failure.ranking.at("energy") == std::vector<std::string>{"gaussian-draw"});
  fs::remove_all(dir);
}

TEST_CASE("reports are written") {
  const auto report = bench::run_experiment(bench::parse_config(kSmallConfig));
  const auto dir = scratch("report");
  bench::write_report(report, dir, true);
  for (const char* f : {"report.json", "scores.csv", "standardized.csv", "plot_data.csv"})
    CHECK(fs::exists(dir / f));
  std::ifstream in(dir / "scores.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "method,rep,metric,value");
  fs::remove_all(dir);
}

TEST_CASE("external CSV pairs") {
  const auto dir = scratch("ingest");
  write_text(dir / "complete.csv", "a,b\n1,2\n3,4\n5,6\n");
  write_text(dir / "incomplete.csv", "a,b\n1,NA\nNA,4\n5,6\n");
  const auto [x, data] = bench::ingest_csv_pair(dir / "complete.csv", dir / "incomplete.csv");
  CHECK(x.rows() == 3);
  CHECK(data.mask().missing_count() == 2);
  CHECK(data.mask().missing(0, 1));

  write_text(dir / "bad.csv", "a,b\n1,2\n3,9\n5,6\n");
  try {
    (void)bench::ingest_csv_pair(dir / "complete.csv", dir / "bad.csv");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("(2,2)") != std::string::npos);
  }
  write_text(dir / "short.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(bench::ingest_csv_pair(dir / "complete.csv", dir / "short.csv"), DataError);

  auto cfg = bench::parse_config(R"({"version": 1, "mechanism": {"name": "external", "complete": "c", "incomplete": "i"},
                                     "repetitions": 1, "methods": ["regression-mean"]})");
  cfg.external = bench::ExternalData{dir / "complete.csv", dir / "incomplete.csv"};
  const auto report = bench::run_experiment(cfg);
  REQUIRE(report.scores.size() == 1);
  CHECK(report.scores[0].ok);
  fs::remove_all(dir);
}

TEST_CASE("observed quantile closed form") {
  CHECK(bench::fgm3_observed_quantile(0.1) == doctest::Approx(-7.0 + std::sqrt(50.5)));
  CHECK(bench::fgm3_observed_quantile(0.5) == doctest::Approx(-7.0 + std::sqrt(56.5)));
}

TEST_CASE("small quantile study") {
  bench::QuantileStudyConfig cfg;
  cfg.n = 2000;
  cfg.repetitions = 2;
  cfg.iterations = 2;
  cfg.seed = 4;
  cfg.methods = {{"true-sampler", {models::ModelKind::true_sampler, {}, {}}}};
  const auto study = bench::run_quantile_study(cfg);
  CHECK(study.population == doctest::Approx(0.1));
  CHECK(study.estimates.size() == 4);
  CHECK(std::abs(study.mean.at("true-sampler") - 0.1) < 0.03);
  CHECK(std::abs(study.mean.at(bench::kObservedOnly) - study.observed_closed_form) < 0.03);
  const auto dir = scratch("quantile");
  bench::write_quantile_study(study, dir);
  CHECK(fs::exists(dir / "quantiles.csv"));
  CHECK(fs::exists(dir / "quantile_summary.json"));
  fs::remove_all(dir);
}
