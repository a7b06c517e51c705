#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "marimpute/csv.hpp"
#include "marimpute/errors.hpp"
#include "marimpute/experiment.hpp"
#include "marimpute/fcs.hpp"
#include "marimpute/mar_analysis.hpp"
#include "marimpute/mechanisms.hpp"

namespace fs = std::filesystem;
using namespace marimpute;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct MechanismArgs {
  std::string name;
  std::optional<std::size_t> d;
  double p = 0.3;
  std::vector<std::size_t> columns;  // 1-based

  void add_to(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--mechanism", name, "Mechanism name");
    if (required) opt->required();
    cmd->add_option("--d", d, "Dimension for ex-fgm3 and mcar-bernoulli");
    cmd->add_option("--p", p, "Masking probability for mcar-bernoulli");
    cmd->add_option("--columns", columns, "Masked columns for mcar-bernoulli (1-based)")->delimiter(',');
  }

  MechanismSpec spec() const {
    MechanismParams params;
    params.d = d;
    params.p = p;
    for (auto c : columns) {
      if (c < 1) throw ConfigError("columns are 1-based");
      params.columns.push_back(c - 1);
    }
    return make_spec(name, params);
  }
};

fs::path chain_path(const fs::path& out, std::size_t k) {
  return out.parent_path() / (out.stem().string() + "_" + std::to_string(k + 1) + out.extension().string());
}

json report_to_json(const analysis::ConditionReport& r) {
  return {{"condition", analysis::to_string(r.condition)},
          {"passed", r.passed},
          {"max_violation", r.max_violation},
          {"tolerance", r.tolerance},
          {"witness", r.witness},
          {"detail", r.detail}};
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream(out) << j.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chained-equations imputation with distributional models, MAR checks and benchmarks"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Draw (X, M) from a catalogue mechanism");
  MechanismArgs gen_mech;
  gen_mech.add_to(gen, true);
  std::size_t gen_n = 1000;
  std::uint64_t gen_seed = 0;
  std::string gen_dir = ".";
  gen->add_option("--n", gen_n, "Rows (per pattern total for stratified mechanisms)");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out-dir", gen_dir, "Writes complete.csv and incomplete.csv here");

  // impute
  auto* imp = app.add_subcommand("impute", "Impute the NA cells of a CSV file");
  std::string imp_in, imp_out, imp_method = "cart-sample", imp_trace;
  std::size_t imp_iters = 10, imp_chains = 1, imp_min_leaf = 5, imp_trees = 100;
  std::optional<std::size_t> imp_mtry;
  std::uint64_t imp_seed = 0;
  bool imp_random = false, imp_pooled = false;
  MechanismArgs imp_mech;
  imp->add_option("--in", imp_in, "Incomplete CSV (NA marks missing cells)")->required();
  imp->add_option("--out", imp_out, "Completed CSV; chains write <stem>_<k>.csv")->required();
  imp->add_option("--method", imp_method, "gaussian-draw, regression-mean, cart-sample, forest-sample, forest-mean, true-sampler");
  imp->add_option("--iters", imp_iters);
  imp->add_option("--chains", imp_chains);
  imp->add_option("--seed", imp_seed);
  imp->add_option("--min-leaf", imp_min_leaf);
  imp->add_option("--trees", imp_trees);
  imp->add_option("--mtry", imp_mtry);
  imp->add_flag("--random-order", imp_random, "Shuffle the column order every sweep");
  imp->add_flag("--pooled-donors", imp_pooled, "Forest sampling from the union of leaves");
  imp->add_option("--trace", imp_trace, "Write the per-sweep mean/variance trace as CSV");
  imp_mech.add_to(imp, false);

  // check
  auto* chk = app.add_subcommand("check", "Numerical MAR, overlap and identifiability checks");
  MechanismArgs chk_mech;
  chk_mech.add_to(chk, true);
  std::string chk_cond, chk_out, chk_order;
  std::size_t chk_grid = 32;
  std::optional<std::size_t> chk_column, chk_pattern;
  double chk_tol = analysis::kDefaultTolerance;
  chk->add_option("--condition", chk_cond,
                  "SM-MAR-II, PMM-MAR, CIMAR, EMAR, MCAR, RMAR, OVERLAP, POSITIVITY, WEIGHTS or FACTOR")
      ->required();
  chk->add_option("--grid", chk_grid, "Nodes per dimension");
  chk->add_option("--tol", chk_tol);
  chk->add_option("--column", chk_column, "OVERLAP for one column (1-based)");
  chk->add_option("--pattern", chk_pattern, "WEIGHTS: pattern index (1-based, catalogue order)");
  chk->add_option("--order", chk_order, "FACTOR: visiting order, e.g. 2,1,3");
  chk->add_option("--out", chk_out, "Write JSON here instead of stdout");

  // bench
  auto* bch = app.add_subcommand("bench", "Run an experiment config");
  std::string bch_config, bch_dir;
  std::optional<std::uint64_t> bch_seed;
  std::optional<std::size_t> bch_jobs;
  bool bch_plot = false;
  bch->add_option("--config", bch_config)->required();
  bch->add_option("--seed", bch_seed, "Override the config seed");
  bch->add_option("--jobs", bch_jobs, "Concurrent repetitions");
  bch->add_option("--out-dir", bch_dir, "Override the config output directory");
  bch->add_flag("--plot-data", bch_plot, "Also write plot_data.csv");

  // quantile-study
  auto* qs = app.add_subcommand("quantile-study", "Estimate the 0.1-quantile of X1 on ex-fgm3");
  bench::QuantileStudyConfig qcfg;
  std::string qs_dir = "quantile_study";
  qs->add_option("--n", qcfg.n);
  qs->add_option("--reps", qcfg.repetitions);
  qs->add_option("--seed", qcfg.seed);
  qs->add_option("--d", qcfg.d);
  qs->add_option("--alpha", qcfg.alpha);
  qs->add_option("--iters", qcfg.iterations);
  qs->add_option("--jobs", qcfg.jobs);
  qs->add_option("--out-dir", qs_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const auto spec = gen_mech.spec();
      const auto sample = generate(spec, gen_n, gen_seed);
      fs::create_directories(gen_dir);
      const auto names = sample.x.column_names();
      csv::write(fs::path(gen_dir) / "complete.csv", sample.x.values(), names);
      csv::write(fs::path(gen_dir) / "incomplete.csv", apply_mask(sample.x, sample.mask).values(), names);
      std::cerr << "wrote " << sample.x.rows() << " rows, " << sample.mask.missing_count() << " missing cells to "
                << gen_dir << '\n';
    } else if (*imp) {
      const auto data = csv::read_incomplete(fs::path(imp_in));
      fcs::FcsConfig cfg;
      cfg.iterations = imp_iters;
      cfg.chains = imp_chains;
      cfg.seed = imp_seed;
      cfg.order = imp_random ? fcs::VisitOrder::random_per_sweep : fcs::VisitOrder::ascending;
      models::ModelSpec ms;
      ms.kind = models::parse_model_kind(imp_method);
      ms.tree.min_leaf = ms.forest.min_leaf = imp_min_leaf;
      ms.forest.trees = imp_trees;
      ms.forest.mtry = imp_mtry;
      ms.forest.pooled_donors = imp_pooled;
      cfg.models = {ms};
      std::optional<MechanismSpec> spec;
      if (!imp_mech.name.empty()) spec = imp_mech.spec();
      const auto run = fcs::impute(data, cfg, spec ? &*spec : nullptr);
      for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
      if (run.completed.size() == 1) {
        csv::write(fs::path(imp_out), run.completed[0].values(), data.column_names());
      } else {
        for (std::size_t k = 0; k < run.completed.size(); ++k)
          csv::write(chain_path(imp_out, k), run.completed[k].values(), data.column_names());
      }
      if (!imp_trace.empty()) {
        std::ofstream t(imp_trace);
        t << "chain,iteration,column,mean,variance\n";
        for (const auto& e : run.trace)
          t << e.chain + 1 << ',' << e.iteration + 1 << ',' << e.column + 1 << ',' << csv::format_double(e.mean)
            << ',' << csv::format_double(e.variance) << '\n';
      }
    } else if (*chk) {
      const auto spec = chk_mech.spec();
      auto grid = analysis::GridSpec::for_spec(spec, chk_grid);
      std::string upper = chk_cond;
      for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      json out;
      if (upper == "WEIGHTS") {
        if (!chk_pattern || *chk_pattern < 1) throw ConfigError("WEIGHTS needs --pattern (1-based)");
        const auto r = analysis::weight_existence(spec, *chk_pattern - 1, grid);
        std::vector<std::size_t> donors;
        for (auto k : r.donors) donors.push_back(k + 1);
        out = {{"condition", "WEIGHTS"}, {"pattern", *chk_pattern}, {"residual", r.residual},
               {"donors", donors},      {"weights", r.weights},     {"witness", r.witness}};
      } else if (upper == "FACTOR") {
        std::vector<std::size_t> order;
        if (chk_order.empty()) {
          for (std::size_t j = 0; j < spec.d; ++j) order.push_back(j);
        } else {
          std::stringstream ss(chk_order);
          for (std::string tok; std::getline(ss, tok, ',');) {
            const long v = std::stol(tok);
            if (v < 1) throw ConfigError("--order is 1-based");
            order.push_back(static_cast<std::size_t>(v - 1));
          }
        }
        const auto r = analysis::graphical_factor_check(spec, order, grid, chk_tol);
        json steps = json::array();
        for (const auto& s : r.steps) {
          std::vector<std::size_t> deps;
          for (auto l : s.masked_dependencies) deps.push_back(l + 1);
          steps.push_back({{"variable", s.variable + 1}, {"preceding", s.preceding}, {"passed", s.passed},
                           {"max_variation", s.max_variation}, {"masked_dependencies", deps}});
        }
        std::vector<std::size_t> perm;
        for (auto v : r.permutation) perm.push_back(v + 1);
        out = {{"condition", "FACTOR"}, {"passed", r.passed}, {"order", perm}, {"steps", steps}};
      } else {
        const auto cond = analysis::parse_condition(chk_cond);
        if (chk_column && cond == analysis::Condition::overlap) {
          if (*chk_column < 1) throw ConfigError("--column is 1-based");
          out = report_to_json(analysis::check_overlap(spec, *chk_column - 1, grid, cond, chk_tol));
        } else {
          out = report_to_json(analysis::check_condition(spec, cond, grid, chk_tol));
        }
      }
      out["mechanism"] = spec.id;
      out["grid"] = chk_grid;
      emit(out, chk_out);
    } else if (*bch) {
      auto cfg = bench::load_config(bch_config);
      if (bch_seed) cfg.seed = *bch_seed;
      if (bch_jobs) cfg.jobs = *bch_jobs;
      if (!bch_dir.empty()) cfg.output_dir = bch_dir;
      if (cfg.output_dir.empty()) cfg.output_dir = "bench_out";
      const auto report = bench::run_experiment(cfg);
      bench::write_report(report, cfg.output_dir, bch_plot);
      for (const auto& s : report.scores)
        if (!s.ok) std::cerr << "warning: " << s.method << " failed on repetition " << s.rep + 1 << ": " << s.error << '\n';
      for (const auto& [metric, ranked] : report.ranking) {
        std::cout << metric << ':';
        for (const auto& m : ranked) std::cout << ' ' << m;
        std::cout << '\n';
      }
    } else if (*qs) {
      const auto study = bench::run_quantile_study(qcfg);
      bench::write_quantile_study(study, qs_dir);
      std::cout << "population quantile " << study.population << ", observed-only closed form "
                << study.observed_closed_form << '\n';
      for (const auto& [name, v] : study.mean) std::cout << name << ": " << v << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
