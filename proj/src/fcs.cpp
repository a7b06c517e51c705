#include "marimpute/fcs.hpp"

#include <algorithm>
#include <numeric>

#include "marimpute/errors.hpp"

namespace marimpute::fcs {

const models::ModelSpec& FcsConfig::model_for(std::size_t column) const {
  return models.size() == 1 ? models.front() : models.at(column);
}

void FcsConfig::validate(std::size_t d) const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (chains < 1) throw ConfigError("chains must be at least 1");
  if (models.empty()) throw ConfigError("no imputation model configured");
  if (models.size() != 1 && models.size() != d)
    throw ConfigError("model list must have one entry or one per column (" + std::to_string(d) + ")");
}

namespace {

std::size_t observed_threshold(const models::ModelSpec& spec) {
  switch (spec.kind) {
    case models::ModelKind::cart_sample: return std::max<std::size_t>(10, 2 * spec.tree.min_leaf);
    case models::ModelKind::forest_sample:
    case models::ModelKind::forest_mean: return std::max<std::size_t>(10, 2 * spec.forest.min_leaf);
    default: return 10;
  }
}

Matrix drop_column(const Matrix& x, std::span<const std::size_t> rows, std::size_t j) {
  Matrix out(rows.size(), x.cols() - 1);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0, t = 0; c < x.cols(); ++c)
      if (c != j) out(r, t++) = x(rows[r], c);
  return out;
}

struct Chain {
  const FcsConfig& cfg;
  const MechanismSpec* mechanism;
  const MissingMask& mask;
  std::vector<RowPartition> parts;
  std::vector<std::size_t> incomplete;  // columns with at least one missing cell
  std::size_t fits = 0;

  Chain(const FcsConfig& c, const MechanismSpec* m, const MissingMask& mk) : cfg(c), mechanism(m), mask(mk) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      RowPartition p;
      for (std::size_t i = 0; i < mask.rows(); ++i) (mask.missing(i, j) ? p.missing : p.observed).push_back(i);
      if (!p.missing.empty()) incomplete.push_back(j);
      parts.push_back(std::move(p));
    }
  }

  void sweep(Matrix& x, Rng& rng, std::size_t chain, std::size_t iteration, std::vector<TraceEntry>* trace) {
    std::vector<std::size_t> order = incomplete;
    if (cfg.order == VisitOrder::random_per_sweep) std::shuffle(order.begin(), order.end(), rng);
    for (auto j : order) {
      const auto& part = parts[j];
      const Matrix features = drop_column(x, part.observed, j);
      std::vector<double> response(part.observed.size());
      for (std::size_t r = 0; r < part.observed.size(); ++r) response[r] = x(part.observed[r], j);
      const auto model = models::fit_model(cfg.model_for(j), features, response, rng(), mechanism, j);
      ++fits;

      const Matrix queries = drop_column(x, part.missing, j);
      double sum = 0.0;
      std::vector<double> drawn(part.missing.size());
      for (std::size_t r = 0; r < part.missing.size(); ++r) {
        drawn[r] = model->impute(queries.row(r), rng);
        sum += drawn[r];
      }
      for (std::size_t r = 0; r < part.missing.size(); ++r) x(part.missing[r], j) = drawn[r];
      if (trace) {
        const double mean = sum / static_cast<double>(drawn.size());
        double var = 0.0;
        for (double v : drawn) var += (v - mean) * (v - mean);
        trace->push_back({chain, iteration, j, mean, var / static_cast<double>(drawn.size())});
      }
    }
  }
};

}  // namespace

ImputationRun impute(const IncompleteData& data, const FcsConfig& cfg, const MechanismSpec* mechanism) {
  const std::size_t n = data.rows();
  const std::size_t d = data.cols();
  cfg.validate(d);
  ImputationRun run;

  Matrix start = data.values();
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t miss = data.mask().missing_in_column(j);
    if (miss == 0) continue;
    const std::size_t observed = n - miss;
    if (observed == 0) throw DataError("column " + std::to_string(j + 1) + " has no observed values");
    if (observed < observed_threshold(cfg.model_for(j)))
      run.warnings.push_back("column " + std::to_string(j + 1) + " has only " + std::to_string(observed) +
                             " observed values");
    if (cfg.model_for(j).kind == models::ModelKind::true_sampler && (!mechanism || !mechanism->has_oracle(j)))
      throw UnsupportedError("no analytic conditional for column " + std::to_string(j + 1));
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!data.mask().missing(i, j)) mean += data(i, j);
    mean /= static_cast<double>(observed);
    for (std::size_t i = 0; i < n; ++i)
      if (data.mask().missing(i, j)) start(i, j) = mean;
  }

  for (std::size_t c = 0; c < cfg.chains; ++c) {
    Rng rng(derive_seed(cfg.seed, c));
    Chain chain(cfg, mechanism, data.mask());
    Matrix x = start;
    if (!chain.incomplete.empty())
      for (std::size_t t = 0; t < cfg.iterations; ++t) chain.sweep(x, rng, c, t, &run.trace);
    run.model_fits += chain.fits;
    run.completed.emplace_back(std::move(x), data.mask());
  }
  return run;
}

ImputationRun impute_with_truth(const IncompleteData& data, FcsConfig cfg, const MechanismSpec& mechanism) {
  if (mechanism.d != data.cols()) throw DataError("mechanism dimension does not match the data");
  cfg.models.assign(1, models::ModelSpec{models::ModelKind::true_sampler, {}, {}});
  return impute(data, cfg, &mechanism);
}

CompletedDataset continue_chain(const CompletedDataset& start, const FcsConfig& cfg, std::size_t sweeps,
                                const MechanismSpec* mechanism) {
  cfg.validate(start.cols());
  Rng rng(derive_seed(cfg.seed, 0x5717));
  Chain chain(cfg, mechanism, start.source_mask());
  Matrix x = start.values();
  for (std::size_t t = 0; t < sweeps; ++t) chain.sweep(x, rng, 0, t, nullptr);
  return CompletedDataset(std::move(x), start.source_mask());
}

}  // namespace marimpute::fcs
