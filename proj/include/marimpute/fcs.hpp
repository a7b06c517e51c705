#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marimpute/data.hpp"
#include "marimpute/mechanisms.hpp"
#include "marimpute/models.hpp"

namespace marimpute::fcs {

enum class VisitOrder { ascending, random_per_sweep };

struct FcsConfig {
  std::size_t iterations = 10;
  VisitOrder order = VisitOrder::ascending;
  /// One entry broadcast to every column, or one per column.
  std::vector<models::ModelSpec> models{models::ModelSpec{}};
  std::size_t chains = 1;
  std::uint64_t seed = 0;

  const models::ModelSpec& model_for(std::size_t column) const;
  /// Throws ConfigError.
  void validate(std::size_t d) const;
};

/// Mean and variance of the imputed cells of one column after one sweep.
struct TraceEntry {
  std::size_t chain = 0;
  std::size_t iteration = 0;
  std::size_t column = 0;
  double mean = 0.0;
  double variance = 0.0;
};

struct ImputationRun {
  std::vector<CompletedDataset> completed;  // one per chain
  std::vector<TraceEntry> trace;
  std::size_t model_fits = 0;
  std::vector<std::string> warnings;
};

/// Chained-equations imputation. Columns are initialized with their observed
/// mean; each sweep refits every incomplete column on its target-observed rows
/// with the current completed matrix as features. `mechanism` is needed only
/// for true-sampler columns.
ImputationRun impute(const IncompleteData& data, const FcsConfig& cfg, const MechanismSpec* mechanism = nullptr);

/// impute() with every column switched to the mechanism's analytic conditional.
ImputationRun impute_with_truth(const IncompleteData& data, FcsConfig cfg, const MechanismSpec& mechanism);

/// Continues the chain from an already completed matrix for `sweeps` sweeps.
CompletedDataset continue_chain(const CompletedDataset& start, const FcsConfig& cfg, std::size_t sweeps,
                                const MechanismSpec* mechanism = nullptr);

}  // namespace marimpute::fcs
