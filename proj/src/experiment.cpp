#include "marimpute/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "marimpute/csv.hpp"
#include "marimpute/errors.hpp"
#include "marimpute/evaluation.hpp"

namespace marimpute::bench {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return obj.at(key).get<T>();
}

std::size_t one_based(const json& v, const std::string& what) {
  const auto c = v.get<long long>();
  if (c < 1) throw ConfigError(what + " columns are 1-based");
  return static_cast<std::size_t>(c - 1);
}

MethodConfig parse_method(json m) {
  if (m.is_string()) m = json{{"kind", m}};
  reject_unknown(m, {"kind", "label", "min_leaf", "max_depth", "trees", "mtry", "bootstrap", "pooled_donors"},
                 "method");
  MethodConfig out;
  out.model.kind = models::parse_model_kind(m.at("kind").get<std::string>());
  out.label = get_or<std::string>(m, "label", models::to_string(out.model.kind));
  const auto min_leaf = get_or<std::size_t>(m, "min_leaf", 5);
  out.model.tree.min_leaf = out.model.forest.min_leaf = min_leaf;
  if (m.contains("max_depth") && !m["max_depth"].is_null())
    out.model.tree.max_depth = out.model.forest.max_depth = m["max_depth"].get<std::size_t>();
  out.model.forest.trees = get_or<std::size_t>(m, "trees", 100);
  if (m.contains("mtry") && !m["mtry"].is_null()) out.model.forest.mtry = m["mtry"].get<std::size_t>();
  out.model.forest.bootstrap = get_or<bool>(m, "bootstrap", true);
  out.model.forest.pooled_donors = get_or<bool>(m, "pooled_donors", false);
  return out;
}

json method_json(const MethodConfig& m) {
  json j{{"kind", models::to_string(m.model.kind)}, {"label", m.label}, {"min_leaf", m.model.tree.min_leaf},
         {"trees", m.model.forest.trees}, {"bootstrap", m.model.forest.bootstrap},
         {"pooled_donors", m.model.forest.pooled_donors}};
  j["max_depth"] = m.model.tree.max_depth ? json(*m.model.tree.max_depth) : json(nullptr);
  j["mtry"] = m.model.forest.mtry ? json(*m.model.forest.mtry) : json(nullptr);
  return j;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Runs `work(r)` for r in [0, count) on up to `jobs` threads.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& work) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    for (std::size_t r = 0; r < count; ++r) work(r);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t r; (r = next++) < count;) work(r);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RepData {
  DataMatrix truth;
  IncompleteData observed;
};

}  // namespace

std::string QuantileTask::name() const {
  std::ostringstream os;
  os << "quantile_X" << column + 1 << "_" << alpha;
  return os.str();
}

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (methods.empty()) throw ConfigError("method list is empty");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (mechanism == "external") {
    if (!external) throw ConfigError("external mechanism needs complete and incomplete CSV paths");
  } else {
    make_spec(mechanism, params);
    if (n < 1) throw ConfigError("n must be at least 1");
  }
  std::set<std::string> labels;
  for (const auto& m : methods)
    if (!labels.insert(m.label).second) throw ConfigError("duplicate method label '" + m.label + "'");
  for (const auto& metric : metrics)
    if (metric != "energy" && metric != "rmse") throw ConfigError("unknown metric '" + metric + "'");
  for (const auto& t : downstream)
    if (!(t.alpha > 0.0 && t.alpha < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
}

ExperimentConfig parse_config(std::string_view json_text) {
  ExperimentConfig cfg;
  try {
    const json root = json::parse(json_text);
    if (!root.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(root, {"version", "mechanism", "n", "repetitions", "seed", "fcs", "methods", "metrics",
                          "downstream", "jobs", "output_dir"},
                   "config");
    if (!root.contains("version")) throw ConfigError("config lacks a version field");
    cfg.version = root.at("version").get<int>();

    const json& mech = root.at("mechanism");
    const json m = mech.is_string() ? json{{"name", mech}} : mech;
    reject_unknown(m, {"name", "d", "p", "columns", "complete", "incomplete"}, "mechanism");
    cfg.mechanism = m.at("name").get<std::string>();
    if (m.contains("d")) cfg.params.d = m["d"].get<std::size_t>();
    cfg.params.p = get_or<double>(m, "p", cfg.params.p);
    if (m.contains("columns"))
      for (const auto& c : m["columns"]) cfg.params.columns.push_back(one_based(c, "mechanism"));
    if (cfg.mechanism == "external")
      cfg.external = ExternalData{m.at("complete").get<std::string>(), m.at("incomplete").get<std::string>()};

    cfg.n = get_or<std::size_t>(root, "n", cfg.n);
    cfg.repetitions = get_or<std::size_t>(root, "repetitions", cfg.repetitions);
    cfg.seed = get_or<std::uint64_t>(root, "seed", cfg.seed);
    cfg.jobs = get_or<std::size_t>(root, "jobs", cfg.jobs);
    cfg.output_dir = get_or<std::string>(root, "output_dir", "");
    if (root.contains("fcs")) {
      const json& f = root["fcs"];
      reject_unknown(f, {"iterations", "visit_order"}, "fcs");
      cfg.iterations = get_or<std::size_t>(f, "iterations", cfg.iterations);
      const auto order = get_or<std::string>(f, "visit_order", "ascending");
      if (order == "ascending")
        cfg.order = fcs::VisitOrder::ascending;
      else if (order == "random")
        cfg.order = fcs::VisitOrder::random_per_sweep;
      else
        throw ConfigError("visit_order must be 'ascending' or 'random'");
    }
    for (const auto& m : root.at("methods")) cfg.methods.push_back(parse_method(m));
    if (root.contains("metrics")) cfg.metrics = root["metrics"].get<std::vector<std::string>>();
    if (root.contains("downstream"))
      for (const auto& t : root["downstream"]) {
        reject_unknown(t, {"task", "column", "alpha"}, "downstream task");
        if (get_or<std::string>(t, "task", "quantile") != "quantile")
          throw ConfigError("only the quantile downstream task is available");
        cfg.downstream.push_back({one_based(t.at("column"), "downstream"), t.at("alpha").get<double>()});
      }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto cfg = parse_config(ss.str());
  // Relative CSV paths are resolved against the config file.
  if (cfg.external) {
    const auto base = path.parent_path();
    if (cfg.external->complete.is_relative()) cfg.external->complete = base / cfg.external->complete;
    if (cfg.external->incomplete.is_relative()) cfg.external->incomplete = base / cfg.external->incomplete;
  }
  return cfg;
}

std::string to_json(const ExperimentConfig& cfg) {
  json mech{{"name", cfg.mechanism}};
  if (cfg.params.d) mech["d"] = *cfg.params.d;
  if (cfg.mechanism == "mcar-bernoulli") {
    mech["p"] = cfg.params.p;
    json cols = json::array();
    for (auto c : cfg.params.columns) cols.push_back(c + 1);
    mech["columns"] = cols;
  }
  if (cfg.external) {
    mech["complete"] = cfg.external->complete.string();
    mech["incomplete"] = cfg.external->incomplete.string();
  }
  json methods = json::array();
  for (const auto& m : cfg.methods) methods.push_back(method_json(m));
  json downstream = json::array();
  for (const auto& t : cfg.downstream) downstream.push_back({{"task", "quantile"}, {"column", t.column + 1}, {"alpha", t.alpha}});
  json root{{"version", cfg.version},
            {"mechanism", mech},
            {"n", cfg.n},
            {"repetitions", cfg.repetitions},
            {"seed", cfg.seed},
            {"fcs",
             {{"iterations", cfg.iterations},
              {"visit_order", cfg.order == fcs::VisitOrder::ascending ? "ascending" : "random"}}},
            {"methods", methods},
            {"metrics", cfg.metrics},
            {"downstream", downstream},
            {"jobs", cfg.jobs},
            {"output_dir", cfg.output_dir}};
  return root.dump(2);
}

// ---------------------------------------------------------------------------

double ExperimentReport::mean(const std::string& method, const std::string& metric) const {
  double s = 0.0;
  std::size_t c = 0;
  for (const auto& sc : scores)
    if (sc.ok && sc.method == method) {
      auto it = sc.values.find(metric);
      if (it != sc.values.end() && std::isfinite(it->second)) {
        s += it->second;
        ++c;
      }
    }
  return c ? s / static_cast<double>(c) : kNaN;
}

double ExperimentReport::mean_standardized(const std::string& method, const std::string& metric) const {
  double s = 0.0;
  std::size_t c = 0;
  for (const auto& e : standardized)
    if (e.method == method && e.metric == metric) {
      s += e.value;
      ++c;
    }
  return c ? s / static_cast<double>(c) : kNaN;
}

std::pair<DataMatrix, IncompleteData> ingest_csv_pair(const std::filesystem::path& complete,
                                                      const std::filesystem::path& incomplete) {
  DataMatrix truth = csv::read_complete(complete);
  IncompleteData observed = csv::read_incomplete(incomplete);
  if (truth.rows() != observed.rows() || truth.cols() != observed.cols())
    throw DataError("complete and incomplete files differ in shape");
  for (std::size_t i = 0; i < truth.rows(); ++i)
    for (std::size_t j = 0; j < truth.cols(); ++j)
      if (!observed.mask().missing(i, j) && observed(i, j) != truth(i, j))
        throw DataError("observed cell (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                        ") differs from the complete file");
  return {std::move(truth), std::move(observed)};
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;

  std::optional<MechanismSpec> spec;
  std::optional<RepData> external;
  if (cfg.external) {
    auto [truth, observed] = ingest_csv_pair(cfg.external->complete, cfg.external->incomplete);
    external = RepData{std::move(truth), std::move(observed)};
  } else {
    spec = make_spec(cfg.mechanism, cfg.params);
  }

  const std::size_t k = cfg.methods.size();
  report.scores.resize(cfg.repetitions * k);
  parallel_for(cfg.repetitions, cfg.jobs, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, r);
    RepData data = external ? *external : [&] {
      auto sample = generate(*spec, cfg.n, rep_seed);
      IncompleteData obs = apply_mask(sample.x, sample.mask);
      return RepData{std::move(sample.x), std::move(obs)};
    }();
    for (std::size_t m = 0; m < k; ++m) {
      auto& score = report.scores[r * k + m];
      score.method = cfg.methods[m].label;
      score.rep = r;
      const auto start = std::chrono::steady_clock::now();
      try {
        fcs::FcsConfig fc;
        fc.iterations = cfg.iterations;
        fc.order = cfg.order;
        fc.models = {cfg.methods[m].model};
        fc.seed = derive_seed(rep_seed, m + 1);
        const auto run = fcs::impute(data.observed, fc, spec ? &*spec : nullptr);
        const auto& done = run.completed.front();
        score.observed_preserved = preserves_observed(data.observed, done.values());
        for (const auto& metric : cfg.metrics) {
          if (metric == "energy")
            score.values["energy"] = eval::energy_distance(done.values(), data.truth.values());
          else if (metric == "rmse")
            score.values["rmse"] = done.source_mask().missing_count() ? eval::rmse(done, data.truth) : 0.0;
        }
        for (const auto& t : cfg.downstream) score.values[t.name()] = eval::quantile_downstream(done, t.column, t.alpha);
        score.ok = true;
      } catch (const std::exception& e) {
        score.ok = false;
        score.error = e.what();
      }
      score.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  });

  // Standardize each metric over all successful (method, repetition) cells.
  for (const auto& metric : cfg.metrics) {
    std::vector<const MethodScore*> cells;
    std::vector<double> negated;
    for (const auto& s : report.scores)
      if (s.ok && s.values.count(metric) && std::isfinite(s.values.at(metric))) {
        cells.push_back(&s);
        negated.push_back(-s.values.at(metric));
      }
    const auto mapped = eval::standardize(negated);
    for (std::size_t c = 0; c < cells.size(); ++c)
      report.standardized.push_back({cells[c]->method, cells[c]->rep, metric, mapped[c]});

    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t m = 0; m < k; ++m) {
      const double v = report.mean_standardized(cfg.methods[m].label, metric);
      if (std::isfinite(v)) order.emplace_back(v, m);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [_, m] : order) report.ranking[metric].push_back(cfg.methods[m].label);
  }
  for (const auto& m : cfg.methods) {
    double s = 0.0;
    for (const auto& sc : report.scores)
      if (sc.method == m.label) s += sc.seconds;
    report.mean_seconds[m.label] = s / static_cast<double>(cfg.repetitions);
  }
  return report;
}

std::string report_json(const ExperimentReport& report) {
  json scores = json::array();
  for (const auto& s : report.scores) {
    json values = json::object();
    for (const auto& [key, v] : s.values) values[key] = finite_or_null(v);
    json e{{"method", s.method}, {"rep", s.rep}, {"ok", s.ok}, {"values", values},
           {"seconds", s.seconds}, {"observed_preserved", s.observed_preserved}};
    if (!s.ok) e["error"] = s.error;
    scores.push_back(e);
  }
  json summary = json::object();
  for (const auto& m : report.config.methods) {
    json per = json::object();
    for (const auto& metric : report.config.metrics)
      per[metric] = {{"mean", finite_or_null(report.mean(m.label, metric))},
                     {"mean_standardized", finite_or_null(report.mean_standardized(m.label, metric))}};
    for (const auto& t : report.config.downstream) per[t.name()] = {{"mean", finite_or_null(report.mean(m.label, t.name()))}};
    per["mean_seconds"] = report.mean_seconds.at(m.label);
    summary[m.label] = per;
  }
  json root{{"config", json::parse(to_json(report.config))},
            {"scores", scores},
            {"summary", summary},
            {"ranking", report.ranking}};
  return root.dump(2);
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir, bool plot_data) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << report_json(report) << '\n';

  std::ofstream scores(dir / "scores.csv");
  scores << "method,rep,metric,value\n";
  for (const auto& s : report.scores) {
    for (const auto& [key, v] : s.values) scores << s.method << ',' << s.rep << ',' << key << ',' << csv::format_double(v) << '\n';
    scores << s.method << ',' << s.rep << ",seconds," << csv::format_double(s.seconds) << '\n';
  }

  std::ofstream standardized(dir / "standardized.csv");
  standardized << "method,rep,metric,value\n";
  for (const auto& e : report.standardized)
    standardized << e.method << ',' << e.rep << ',' << e.metric << ',' << csv::format_double(e.value) << '\n';

  if (plot_data) {
    std::ofstream plot(dir / "plot_data.csv");
    plot << "metric,method,mean,min,max,rank\n";
    for (const auto& [metric, ranked] : report.ranking)
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& e : report.standardized)
          if (e.metric == metric && e.method == ranked[r]) {
            lo = std::min(lo, e.value);
            hi = std::max(hi, e.value);
          }
        plot << metric << ',' << ranked[r] << ',' << csv::format_double(report.mean_standardized(ranked[r], metric))
             << ',' << csv::format_double(lo) << ',' << csv::format_double(hi) << ',' << r + 1 << '\n';
      }
  }
}

// ---------------------------------------------------------------------------

double fgm3_observed_quantile(double alpha) { return -7.0 + std::sqrt(49.0 + 15.0 * alpha); }

QuantileStudy run_quantile_study(const QuantileStudyConfig& cfg) {
  if (cfg.repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  MechanismParams params;
  params.d = cfg.d;
  const auto spec = make_spec("ex-fgm3", params);
  if (cfg.column >= spec.d) throw ConfigError("column index out of range");

  std::vector<MethodConfig> methods = cfg.methods;
  if (methods.empty())
    for (auto kind : {models::ModelKind::true_sampler, models::ModelKind::cart_sample,
                      models::ModelKind::forest_sample, models::ModelKind::forest_mean})
      methods.push_back({models::to_string(kind), models::ModelSpec{kind, {}, {}}});

  const std::size_t k = methods.size() + 1;
  QuantileStudy study;
  study.estimates.resize(cfg.repetitions * k);
  parallel_for(cfg.repetitions, cfg.jobs, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, r);
    const auto sample = generate(spec, cfg.n, rep_seed);
    const auto observed = apply_mask(sample.x, sample.mask);
    study.estimates[r * k] = {kObservedOnly, r, eval::observed_only_quantile(observed, cfg.column, cfg.alpha)};
    for (std::size_t m = 0; m < methods.size(); ++m) {
      fcs::FcsConfig fc;
      fc.iterations = cfg.iterations;
      fc.models = {methods[m].model};
      fc.seed = derive_seed(rep_seed, m + 1);
      const auto run = fcs::impute(observed, fc, &spec);
      study.estimates[r * k + m + 1] = {methods[m].label, r,
                                        eval::quantile_downstream(run.completed.front(), cfg.column, cfg.alpha)};
    }
  });
  std::map<std::string, std::size_t> counts;
  for (const auto& e : study.estimates) {
    study.mean[e.estimator] += e.value;
    ++counts[e.estimator];
  }
  for (auto& [name, v] : study.mean) v /= static_cast<double>(counts[name]);
  // X1 and X2 are uniform marginally; the masking of X1 depends on X2 only.
  study.population = cfg.alpha;
  study.observed_closed_form = cfg.column == 0 ? fgm3_observed_quantile(cfg.alpha) : kNaN;
  return study;
}

void write_quantile_study(const QuantileStudy& study, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "quantiles.csv");
  out << "estimator,rep,value\n";
  for (const auto& e : study.estimates) out << e.estimator << ',' << e.rep << ',' << csv::format_double(e.value) << '\n';
  json means = json::object();
  for (const auto& [name, v] : study.mean) means[name] = v;
  json root{{"population_quantile", study.population},
            {"observed_closed_form", finite_or_null(study.observed_closed_form)},
            {"mean", means}};
  std::ofstream(dir / "quantile_summary.json") << root.dump(2) << '\n';
}

}  // namespace marimpute::bench
