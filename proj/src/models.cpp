#include "marimpute/models.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marimpute/errors.hpp"

namespace marimpute::models {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian_draw: return "gaussian-draw";
    case ModelKind::regression_mean: return "regression-mean";
    case ModelKind::cart_sample: return "cart-sample";
    case ModelKind::forest_sample: return "forest-sample";
    case ModelKind::forest_mean: return "forest-mean";
    case ModelKind::true_sampler: return "true-sampler";
  }
  return "?";
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::gaussian_draw, ModelKind::regression_mean, ModelKind::cart_sample,
          ModelKind::forest_sample, ModelKind::forest_mean,     ModelKind::true_sampler};
}

ModelKind parse_model_kind(const std::string& tag) {
  for (auto k : all_model_kinds())
    if (to_string(k) == tag) return k;
  throw ConfigError("unknown model kind '" + tag + "'");
}

bool is_distributional(ModelKind kind) {
  return kind != ModelKind::regression_mean && kind != ModelKind::forest_mean;
}

// ---------------------------------------------------------------------------
// Linear Gaussian

double GaussianLinearModel::predict(std::span<const double> features) const {
  if (features.size() + 1 != beta_.size()) throw DataError("feature count does not match the fitted model");
  double v = beta_[0];
  for (std::size_t t = 0; t < features.size(); ++t) v += beta_[t + 1] * features[t];
  return v;
}

double GaussianLinearModel::sample(std::span<const double> features, Rng& rng) const {
  return predict(features) + std::sqrt(sigma2_) * standard_normal(rng);
}

GaussianLinearModel fit_gaussian_linear(const Matrix& features, std::span<const double> response, ModelKind kind) {
  const std::size_t n = features.rows();
  const std::size_t p = features.cols();
  if (n == 0 || response.size() != n) throw DataError("linear fit needs matching, nonempty features and response");
  Eigen::MatrixXd x(n, p + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (std::size_t t = 0; t < p; ++t) x(i, t + 1) = features(i, t);
    y(i) = response[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  Eigen::VectorXd beta;
  bool ridge = false;
  if (n >= p + 1 && qr.rank() == static_cast<Eigen::Index>(p + 1)) {
    beta = qr.solve(y);
  } else {
    ridge = true;
    Eigen::MatrixXd gram = x.transpose() * x;
    const double lambda = 1e-8 * gram.trace() / static_cast<double>(p + 1);
    gram.diagonal().array() += lambda > 0.0 ? lambda : 1e-8;
    beta = gram.ldlt().solve(x.transpose() * y);
  }
  const double rss = (y - x * beta).squaredNorm();
  const double dof = n > p + 1 ? static_cast<double>(n - p - 1) : 1.0;
  return GaussianLinearModel(kind, std::vector<double>(beta.data(), beta.data() + beta.size()), rss / dof, ridge);
}

// ---------------------------------------------------------------------------
// Trees

std::size_t Tree::leaf_of(std::span<const double> features) const {
  std::size_t node = 0;
  while (nodes_[node].column >= 0) {
    const auto& n = nodes_[node];
    node = features[static_cast<std::size_t>(n.column)] <= n.threshold ? n.left : n.right;
  }
  return node;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.column < 0; }));
}

std::optional<Split> best_split(const Matrix& features, std::span<const double> response,
                                std::span<const std::uint32_t> rows, std::span<const std::size_t> columns,
                                std::size_t min_leaf) {
  const std::size_t n = rows.size();
  if (n < 2 * std::max<std::size_t>(min_leaf, 1)) return std::nullopt;
  double mean = 0.0;
  for (auto r : rows) mean += response[r];
  mean /= static_cast<double>(n);
  double total_sse = 0.0;
  for (auto r : rows) total_sse += (response[r] - mean) * (response[r] - mean);
  if (total_sse <= 0.0) return std::nullopt;

  std::vector<std::size_t> cols(columns.begin(), columns.end());
  std::sort(cols.begin(), cols.end());
  std::vector<std::pair<double, double>> xy(n);
  std::optional<Split> best;
  double best_score = 0.0;  // between-group sum of squares; must be positive
  for (auto c : cols) {
    for (std::size_t i = 0; i < n; ++i) xy[i] = {features(rows[i], c), response[rows[i]] - mean};
    std::sort(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double total = 0.0;
    for (const auto& e : xy) total += e.second;
    double left = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left += xy[i].second;
      const std::size_t nl = i + 1;
      const std::size_t nr = n - nl;
      if (nl < min_leaf) continue;
      if (nr < min_leaf) break;
      if (!(xy[i].first < xy[i + 1].first)) continue;
      const double right = total - left;
      const double score = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
      if (score > best_score) {
        best_score = score;
        double mid = 0.5 * (xy[i].first + xy[i + 1].first);
        if (!(mid < xy[i + 1].first)) mid = xy[i].first;
        best = Split{c, mid, total_sse - score};
      }
    }
  }
  return best;
}

Tree grow_tree(const Matrix& features, std::span<const double> response, std::vector<std::uint32_t> rows,
               std::size_t min_leaf, std::optional<std::size_t> max_depth, std::size_t mtry, Rng& rng) {
  const std::size_t p = features.cols();
  mtry = std::clamp<std::size_t>(mtry, 1, std::max<std::size_t>(p, 1));
  std::vector<std::size_t> all(p);
  std::iota(all.begin(), all.end(), 0);

  std::vector<TreeNode> nodes(1);
  struct Pending {
    std::uint32_t node, begin, end;
    std::size_t depth;
  };
  std::vector<Pending> stack{{0, 0, static_cast<std::uint32_t>(rows.size()), 0}};
  std::vector<std::size_t> candidates;
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    std::span<std::uint32_t> span(rows.data() + cur.begin, cur.end - cur.begin);

    std::optional<Split> split;
    if (p > 0 && (!max_depth || cur.depth < *max_depth)) {
      if (mtry < p) {
        candidates = all;
        for (std::size_t t = 0; t < mtry; ++t) std::swap(candidates[t], candidates[t + uniform_index(rng, p - t)]);
        candidates.resize(mtry);
      } else {
        candidates = all;
      }
      split = best_split(features, response, span, candidates, min_leaf);
    }
    if (!split) {
      nodes[cur.node].column = -1;
      nodes[cur.node].begin = cur.begin;
      nodes[cur.node].end = cur.end;
      continue;
    }
    const auto mid = std::stable_partition(span.begin(), span.end(), [&](std::uint32_t r) {
      return features(r, split->column) <= split->threshold;
    });
    const auto cut = cur.begin + static_cast<std::uint32_t>(mid - span.begin());
    const auto left = static_cast<std::uint32_t>(nodes.size());
    nodes.resize(nodes.size() + 2);
    auto& n = nodes[cur.node];
    n.column = static_cast<int>(split->column);
    n.threshold = split->threshold;
    n.left = left;
    n.right = left + 1;
    stack.push_back({left + 1, cut, cur.end, cur.depth + 1});
    stack.push_back({left, cur.begin, cut, cur.depth + 1});
  }
  return Tree(std::move(nodes), std::move(rows));
}

double CartModel::sample(std::span<const double> features, Rng& rng) const {
  const auto members = tree_.leaf_members(tree_.leaf_of(features));
  return y_[members[uniform_index(rng, members.size())]];
}

double CartModel::predict(std::span<const double> features) const {
  const auto members = tree_.leaf_members(tree_.leaf_of(features));
  double s = 0.0;
  for (auto r : members) s += y_[r];
  return s / static_cast<double>(members.size());
}

CartModel fit_cart(const Matrix& features, std::span<const double> response, const TreeParams& params) {
  const std::size_t n = features.rows();
  if (n == 0 || response.size() != n) throw DataError("tree fit needs matching, nonempty features and response");
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0u);
  Rng unused(0);
  auto tree = grow_tree(features, response, std::move(rows), params.min_leaf, params.max_depth, features.cols(), unused);
  return CartModel(std::move(tree), std::vector<double>(response.begin(), response.end()));
}

// ---------------------------------------------------------------------------
// Forests

std::vector<std::pair<std::uint32_t, double>> ForestModel::weights(std::span<const double> features) const {
  std::vector<std::pair<std::uint32_t, double>> raw;
  const double per_tree = 1.0 / static_cast<double>(trees_.size());
  for (const auto& t : trees_) {
    const auto members = t.leaf_members(t.leaf_of(features));
    const double w = per_tree / static_cast<double>(members.size());
    for (auto r : members) raw.emplace_back(r, w);
  }
  std::sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::uint32_t, double>> merged;
  for (const auto& e : raw) {
    if (!merged.empty() && merged.back().first == e.first)
      merged.back().second += e.second;
    else
      merged.push_back(e);
  }
  return merged;
}

double ForestModel::predict(std::span<const double> features) const {
  double v = 0.0;
  for (const auto& [r, w] : weights(features)) v += w * y_[r];
  return v;
}

double ForestModel::sample(std::span<const double> features, Rng& rng) const {
  if (!pooled_) {
    const auto& t = trees_[uniform_index(rng, trees_.size())];
    const auto members = t.leaf_members(t.leaf_of(features));
    return y_[members[uniform_index(rng, members.size())]];
  }
  std::vector<std::span<const std::uint32_t>> leaves;
  std::size_t total = 0;
  for (const auto& t : trees_) {
    leaves.push_back(t.leaf_members(t.leaf_of(features)));
    total += leaves.back().size();
  }
  std::size_t pick = uniform_index(rng, total);
  for (const auto& leaf : leaves) {
    if (pick < leaf.size()) return y_[leaf[pick]];
    pick -= leaf.size();
  }
  return y_[leaves.back().back()];
}

ForestModel fit_forest(const Matrix& features, std::span<const double> response, const ForestParams& params,
                       std::uint64_t seed, ModelKind kind) {
  const std::size_t n = features.rows();
  const std::size_t p = features.cols();
  if (n == 0 || response.size() != n) throw DataError("forest fit needs matching, nonempty features and response");
  if (params.trees == 0) throw ConfigError("forest needs at least one tree");
  const std::size_t mtry = params.mtry.value_or(std::max<std::size_t>(1, p / 3));
  if (p > 0 && (mtry < 1 || mtry > p)) throw ConfigError("mtry must lie in [1, number of features]");

  Rng rng(seed);
  std::vector<Tree> trees;
  trees.reserve(params.trees);
  for (std::size_t b = 0; b < params.trees; ++b) {
    std::vector<std::uint32_t> rows(n);
    if (params.bootstrap)
      for (auto& r : rows) r = static_cast<std::uint32_t>(uniform_index(rng, n));
    else
      std::iota(rows.begin(), rows.end(), 0u);
    trees.push_back(grow_tree(features, response, std::move(rows), params.min_leaf, params.max_depth, mtry, rng));
  }
  return ForestModel(kind, std::move(trees), std::vector<double>(response.begin(), response.end()),
                     params.pooled_donors);
}

// ---------------------------------------------------------------------------
// Oracle

std::vector<double> TrueSamplerModel::full_point(std::span<const double> features) const {
  if (features.size() + 1 != d_) throw DataError("feature count does not match the mechanism dimension");
  std::vector<double> x(d_, 0.0);
  for (std::size_t t = 0, c = 0; c < d_; ++c)
    if (c != j_) x[c] = features[t++];
  return x;
}

double TrueSamplerModel::sample(std::span<const double> features, Rng& rng) const {
  const auto x = full_point(features);
  return oracle_.sample(x, rng);
}

double TrueSamplerModel::predict(std::span<const double> features) const {
  const auto x = full_point(features);
  return oracle_.mean(x);
}

TrueSamplerModel true_sampler(const MechanismSpec& spec, std::size_t j) {
  if (!spec.has_oracle(j))
    throw UnsupportedError(spec.id + " has no analytic conditional for column " + std::to_string(j + 1));
  return TrueSamplerModel(*spec.conditionals[j], j, spec.d);
}

std::unique_ptr<ConditionalModel> fit_model(const ModelSpec& spec, const Matrix& features,
                                            std::span<const double> response, std::uint64_t seed,
                                            const MechanismSpec* mechanism, std::size_t column) {
  switch (spec.kind) {
    case ModelKind::gaussian_draw:
    case ModelKind::regression_mean:
      return std::make_unique<GaussianLinearModel>(fit_gaussian_linear(features, response, spec.kind));
    case ModelKind::cart_sample:
      return std::make_unique<CartModel>(fit_cart(features, response, spec.tree));
    case ModelKind::forest_sample:
    case ModelKind::forest_mean:
      return std::make_unique<ForestModel>(fit_forest(features, response, spec.forest, seed, spec.kind));
    case ModelKind::true_sampler:
      if (!mechanism) throw UnsupportedError("true-sampler needs a mechanism with analytic conditionals");
      return std::make_unique<TrueSamplerModel>(true_sampler(*mechanism, column));
  }
  throw ConfigError("unknown model kind");
}

}  // namespace marimpute::models
