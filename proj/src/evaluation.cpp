#include "marimpute/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "marimpute/errors.hpp"

namespace marimpute::eval {

namespace {

/// Strict weak order on samples so that the argument order of the energy
/// distance does not affect the floating-point summation.
bool canonically_less(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  double sa = 0.0;
  double sb = 0.0;
  for (double v : a.values()) sa += v * v;
  for (double v : b.values()) sb += v * v;
  if (sa != sb) return sa < sb;
  const auto& va = a.values();
  const auto& vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i)
    if (std::abs(va[i]) != std::abs(vb[i])) return std::abs(va[i]) < std::abs(vb[i]);
  return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
}

}  // namespace

double pairwise_distance_sum(const Matrix& a, const Matrix& b) {
  const std::size_t d = a.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    double row_sum = 0.0;
    for (std::size_t k = 0; k < b.rows(); ++k) {
      const auto bk = b.row(k);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = ai[c] - bk[c];
        s += diff * diff;
      }
      row_sum += std::sqrt(s);
    }
    total += row_sum;
  }
  return total;
}

double energy_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw DataError("energy distance needs nonempty samples");
  if (a.cols() != b.cols()) throw DataError("energy distance: dimension mismatch");
  const Matrix& first = canonically_less(b, a) ? b : a;
  const Matrix& second = &first == &a ? b : a;
  const double n = static_cast<double>(first.rows());
  const double m = static_cast<double>(second.rows());
  const double cross = pairwise_distance_sum(first, second) / (n * m);
  const double self_first = pairwise_distance_sum(first, first) / (n * n);
  const double self_second = pairwise_distance_sum(second, second) / (m * m);
  return std::max(0.0, 2.0 * cross - self_first - self_second);
}

double rmse(const CompletedDataset& completed, const DataMatrix& truth) {
  if (completed.rows() != truth.rows() || completed.cols() != truth.cols())
    throw DataError("rmse: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < truth.rows(); ++i)
    for (std::size_t j = 0; j < truth.cols(); ++j)
      if (completed.source_mask().missing(i, j)) {
        const double e = completed(i, j) - truth(i, j);
        sum += e * e;
        ++count;
      }
  if (count == 0) throw DataError("rmse: no missing cells");
  return std::sqrt(sum / static_cast<double>(count));
}

std::vector<double> standardize(std::span<const double> raw, double eps) {
  if (raw.empty()) return {};
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), -0.5);
  if (*lo == *hi) return out;
  const double span = *hi - *lo;
  const double width = 1.0 - 2.0 * eps;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = -1.0 + eps + width * (raw[i] - *lo) / span;
  return out;
}

double quantile(std::vector<double> values, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * alpha;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double quantile_downstream(const CompletedDataset& completed, std::size_t j, double alpha) {
  if (j >= completed.cols()) throw ConfigError("column index out of range");
  return quantile(completed.values().column(j), alpha);
}

double observed_only_quantile(const IncompleteData& data, std::size_t j, double alpha) {
  if (j >= data.cols()) throw ConfigError("column index out of range");
  std::vector<double> v;
  for (auto i : observed_row_index(data, j).observed) v.push_back(data(i, j));
  return quantile(std::move(v), alpha);
}

}  // namespace marimpute::eval
