#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "marimpute/data.hpp"
#include "marimpute/mechanisms.hpp"
#include "marimpute/random.hpp"

namespace marimpute::models {

enum class ModelKind { gaussian_draw, regression_mean, cart_sample, forest_sample, forest_mean, true_sampler };

std::string to_string(ModelKind kind);
/// Throws ConfigError on unknown tags.
ModelKind parse_model_kind(const std::string& tag);
std::vector<ModelKind> all_model_kinds();
/// Distributional kinds impute by sampling; the others insert the predicted mean.
bool is_distributional(ModelKind kind);

struct TreeParams {
  std::size_t min_leaf = 5;
  std::optional<std::size_t> max_depth;
};

struct ForestParams {
  std::size_t trees = 100;
  std::size_t min_leaf = 5;
  std::optional<std::size_t> mtry;  // default max(1, floor(p / 3)) for p features
  std::optional<std::size_t> max_depth;
  bool bootstrap = true;
  /// Draw uniformly from the union of the query's leaves (mice-RF style)
  /// instead of using the averaged per-tree leaf weights.
  bool pooled_donors = false;
};

/// Model choice plus hyperparameters for one column.
struct ModelSpec {
  ModelKind kind = ModelKind::cart_sample;
  TreeParams tree;
  ForestParams forest;
};

/// p_n(x_j | x_{-j}): fitted on (features, response) with features = x_{-j}.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual ModelKind kind() const = 0;
  virtual double sample(std::span<const double> features, Rng& rng) const = 0;
  virtual double predict(std::span<const double> features) const = 0;

  /// What FCS writes into a missing cell.
  double impute(std::span<const double> features, Rng& rng) const {
    return is_distributional(kind()) ? sample(features, rng) : predict(features);
  }
};

class GaussianLinearModel final : public ConditionalModel {
 public:
  GaussianLinearModel(ModelKind kind, std::vector<double> coefficients, double residual_variance, bool ridge)
      : kind_(kind), beta_(std::move(coefficients)), sigma2_(residual_variance), ridge_(ridge) {}

  ModelKind kind() const override { return kind_; }
  double sample(std::span<const double> features, Rng& rng) const override;
  double predict(std::span<const double> features) const override;

  /// Intercept first, then one slope per feature.
  const std::vector<double>& coefficients() const { return beta_; }
  double residual_variance() const { return sigma2_; }
  bool used_ridge() const { return ridge_; }

 private:
  ModelKind kind_;
  std::vector<double> beta_;
  double sigma2_;
  bool ridge_;
};

/// Least squares with intercept; residual variance RSS / (rows - p - 1). A
/// rank-deficient design falls back to a small ridge penalty.
GaussianLinearModel fit_gaussian_linear(const Matrix& features, std::span<const double> response,
                                        ModelKind kind = ModelKind::gaussian_draw);

struct TreeNode {
  int column = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t begin = 0;  // leaf members: [begin, end) of Tree::members()
  std::uint32_t end = 0;
};

/// Regression tree storing, per leaf, the training row indices routed to it
/// (with multiplicity under bootstrap). Goes left when x[column] <= threshold.
class Tree {
 public:
  Tree() = default;
  Tree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> members)
      : nodes_(std::move(nodes)), members_(std::move(members)) {}

  std::size_t leaf_of(std::span<const double> features) const;
  std::span<const std::uint32_t> leaf_members(std::size_t leaf) const {
    return {members_.data() + nodes_[leaf].begin, members_.data() + nodes_[leaf].end};
  }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t leaf_count() const;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> members_;
};

struct Split {
  std::size_t column = 0;
  double threshold = 0.0;
  double child_sse = 0.0;  // summed squared error of the two children
};

/// Best variance-reduction split of `rows` over `columns`: candidates are the
/// midpoints between consecutive distinct values with both children holding at
/// least min_leaf rows. Ties go to the lower column, then the lower threshold.
std::optional<Split> best_split(const Matrix& features, std::span<const double> response,
                                std::span<const std::uint32_t> rows, std::span<const std::size_t> columns,
                                std::size_t min_leaf);

/// Grows a tree greedily on `rows`. When `mtry` is below the feature count a
/// fresh column subset is drawn at every node.
Tree grow_tree(const Matrix& features, std::span<const double> response, std::vector<std::uint32_t> rows,
               std::size_t min_leaf, std::optional<std::size_t> max_depth, std::size_t mtry, Rng& rng);

class CartModel final : public ConditionalModel {
 public:
  CartModel(Tree tree, std::vector<double> response) : tree_(std::move(tree)), y_(std::move(response)) {}

  ModelKind kind() const override { return ModelKind::cart_sample; }
  /// Uniform draw from the query leaf's training responses.
  double sample(std::span<const double> features, Rng& rng) const override;
  /// Leaf mean.
  double predict(std::span<const double> features) const override;
  const Tree& tree() const { return tree_; }

 private:
  Tree tree_;
  std::vector<double> y_;
};

CartModel fit_cart(const Matrix& features, std::span<const double> response, const TreeParams& params = {});

class ForestModel final : public ConditionalModel {
 public:
  ForestModel(ModelKind kind, std::vector<Tree> trees, std::vector<double> response, bool pooled_donors)
      : kind_(kind), trees_(std::move(trees)), y_(std::move(response)), pooled_(pooled_donors) {}

  ModelKind kind() const override { return kind_; }
  double sample(std::span<const double> features, Rng& rng) const override;
  /// Inner product of weights(features) with the training responses.
  double predict(std::span<const double> features) const override;

  /// Nonzero training-row weights at the query, sorted by row index; they sum to 1.
  std::vector<std::pair<std::uint32_t, double>> weights(std::span<const double> features) const;
  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& response() const { return y_; }

 private:
  ModelKind kind_;
  std::vector<Tree> trees_;
  std::vector<double> y_;
  bool pooled_;
};

ForestModel fit_forest(const Matrix& features, std::span<const double> response, const ForestParams& params,
                       std::uint64_t seed, ModelKind kind = ModelKind::forest_sample);

/// Analytic conditional of column j from a mechanism. Features are x_{-j}.
class TrueSamplerModel final : public ConditionalModel {
 public:
  TrueSamplerModel(ConditionalOracle oracle, std::size_t column, std::size_t d)
      : oracle_(std::move(oracle)), j_(column), d_(d) {}

  ModelKind kind() const override { return ModelKind::true_sampler; }
  double sample(std::span<const double> features, Rng& rng) const override;
  double predict(std::span<const double> features) const override;

 private:
  std::vector<double> full_point(std::span<const double> features) const;

  ConditionalOracle oracle_;
  std::size_t j_;
  std::size_t d_;
};

/// Throws UnsupportedError when the spec has no oracle for column j.
TrueSamplerModel true_sampler(const MechanismSpec& spec, std::size_t j);

/// Fits any non-oracle kind. true_sampler requires a spec and column.
std::unique_ptr<ConditionalModel> fit_model(const ModelSpec& spec, const Matrix& features,
                                            std::span<const double> response, std::uint64_t seed,
                                            const MechanismSpec* mechanism = nullptr, std::size_t column = 0);

}  // namespace marimpute::models
