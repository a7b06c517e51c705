#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "marimpute/data.hpp"
#include "marimpute/fcs.hpp"
#include "marimpute/mechanisms.hpp"
#include "marimpute/models.hpp"

namespace marimpute::bench {

inline constexpr int kConfigVersion = 1;

struct MethodConfig {
  std::string label;
  models::ModelSpec model;
};

/// Empirical alpha-quantile of a column of each completed dataset.
struct QuantileTask {
  std::size_t column = 0;  // 0-based
  double alpha = 0.1;
  std::string name() const;
};

struct ExternalData {
  std::filesystem::path complete;
  std::filesystem::path incomplete;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string mechanism;
  MechanismParams params;
  std::optional<ExternalData> external;  // mechanism == "external"
  std::size_t n = 5000;
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
  std::size_t iterations = 10;
  fcs::VisitOrder order = fcs::VisitOrder::ascending;
  std::vector<MethodConfig> methods;
  std::vector<std::string> metrics{"energy", "rmse"};
  std::vector<QuantileTask> downstream;
  std::size_t jobs = 1;
  std::string output_dir;

  void validate() const;
};

/// Throws ConfigError on malformed JSON, unknown keys or invalid values.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& cfg);

struct MethodScore {
  std::string method;
  std::size_t rep = 0;
  bool ok = false;
  std::string error;
  std::map<std::string, double> values;  // metric or downstream task -> raw value
  double seconds = 0.0;
  bool observed_preserved = false;
};

struct StandardizedEntry {
  std::string method;
  std::size_t rep = 0;
  std::string metric;
  double value = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<MethodScore> scores;             // repetition-major, methods in config order
  std::vector<StandardizedEntry> standardized;
  std::map<std::string, std::vector<std::string>> ranking;  // metric -> methods, best first
  std::map<std::string, double> mean_seconds;

  /// Mean raw value over the successful repetitions; NaN when there are none.
  double mean(const std::string& method, const std::string& metric) const;
  double mean_standardized(const std::string& method, const std::string& metric) const;
};

/// Generates (or reads) the data once per repetition, runs every method on the
/// same draw, and scores against the complete data. A failing method is
/// recorded and the others continue.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Writes report.json, scores.csv, standardized.csv and, on request, plot_data.csv.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir, bool plot_data);
std::string report_json(const ExperimentReport& report);

/// Complete and incomplete CSV files of one dataset. Observed cells must agree.
std::pair<DataMatrix, IncompleteData> ingest_csv_pair(const std::filesystem::path& complete,
                                                      const std::filesystem::path& incomplete);

struct QuantileStudyConfig {
  std::size_t n = 5000;
  std::size_t repetitions = 20;
  std::uint64_t seed = 0;
  std::size_t d = 5;
  std::size_t column = 0;
  double alpha = 0.1;
  std::size_t iterations = 10;
  std::size_t jobs = 1;
  std::vector<MethodConfig> methods;  // empty: true-sampler, cart-sample, forest-sample, forest-mean
};

struct QuantileEstimate {
  std::string estimator;
  std::size_t rep = 0;
  double value = 0.0;
};

struct QuantileStudy {
  std::vector<QuantileEstimate> estimates;
  std::map<std::string, double> mean;
  double population = 0.0;          // the quantile of the complete-data marginal
  double observed_closed_form = 0.0;  // the quantile of X1 among rows with X1 observed
};

inline constexpr const char* kObservedOnly = "observed-only";

/// Estimates the alpha-quantile of X1 on ex-fgm3 by each imputation method and
/// by the observed entries alone.
QuantileStudy run_quantile_study(const QuantileStudyConfig& cfg);
/// Closed-form alpha-quantile of X1 given M1 = 0 under ex-fgm3.
double fgm3_observed_quantile(double alpha);
void write_quantile_study(const QuantileStudy& study, const std::filesystem::path& dir);

}  // namespace marimpute::bench
