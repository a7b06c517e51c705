#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "marimpute/data.hpp"

namespace marimpute::eval {

/// V-statistic plug-in of 2E|X-Y| - E|X-X'| - E|Y-Y'| with Euclidean norm.
/// Symmetric in its arguments bit for bit, exactly 0 on identical samples, and
/// clamped at 0.
double energy_distance(const Matrix& a, const Matrix& b);

/// Sum over all ordered pairs (i, k) of |a_i - b_k|, accumulated row by row.
double pairwise_distance_sum(const Matrix& a, const Matrix& b);

/// Root mean squared error over the cells the source mask marks as missing.
double rmse(const CompletedDataset& completed, const DataMatrix& truth);

inline constexpr double kStandardizeEpsilon = 1e-6;

/// Affine min-max map onto [-1 + eps, -eps]. Identical inputs all map to -0.5.
std::vector<double> standardize(std::span<const double> raw, double eps = kStandardizeEpsilon);

/// Linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double alpha);

double quantile_downstream(const CompletedDataset& completed, std::size_t j, double alpha);
/// The same estimator on the observed entries of column j only.
double observed_only_quantile(const IncompleteData& data, std::size_t j, double alpha);

}  // namespace marimpute::eval
