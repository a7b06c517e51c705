#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace marimpute {

/// Marker stored in missing cells. Any NaN is treated as missing.
inline constexpr double kNA = std::numeric_limits<double>::quiet_NaN();
inline bool is_na(double v) { return std::isnan(v); }

/// Dense row-major n x d matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double> column(std::size_t j) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// {0,1} mask; 1 marks a missing cell.
class MissingMask {
 public:
  MissingMask() = default;
  MissingMask(std::size_t rows, std::size_t cols);
  MissingMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> entries);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool missing(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool is_missing) { entries_[i * cols_ + j] = is_missing ? 1 : 0; }
  std::span<const std::uint8_t> row(std::size_t i) const { return {entries_.data() + i * cols_, cols_}; }

  std::size_t missing_count() const;
  std::size_t missing_in_column(std::size_t j) const;
  const std::vector<std::uint8_t>& entries() const { return entries_; }

  friend bool operator==(const MissingMask&, const MissingMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> entries_;
};

/// Complete data X. Entries are finite; n, d >= 1.
class DataMatrix {
 public:
  DataMatrix() = default;
  explicit DataMatrix(Matrix values, std::vector<std::string> column_names = {});

  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& values() const { return values_; }
  const std::vector<std::string>& column_names() const { return names_; }

 private:
  Matrix values_;
  std::vector<std::string> names_;
};

/// Observed data X*: NA exactly where the mask is 1.
class IncompleteData {
 public:
  IncompleteData() = default;
  /// Mask is derived from the NaN cells of `values`.
  explicit IncompleteData(Matrix values, std::vector<std::string> column_names = {});
  /// Checks that NaN cells and mask entries agree.
  IncompleteData(Matrix values, MissingMask mask, std::vector<std::string> column_names = {});

  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& values() const { return values_; }
  const MissingMask& mask() const { return mask_; }
  const std::vector<std::string>& column_names() const { return names_; }

 private:
  Matrix values_;
  MissingMask mask_;
  std::vector<std::string> names_;
};

struct Pattern {
  std::vector<std::uint8_t> bits;
  std::size_t count = 0;

  friend bool operator==(const Pattern&, const Pattern&) = default;
};

/// Imputed matrix together with the mask it was imputed from.
class CompletedDataset {
 public:
  CompletedDataset() = default;
  CompletedDataset(Matrix values, MissingMask source_mask);

  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& values() const { return values_; }
  const MissingMask& source_mask() const { return mask_; }

 private:
  Matrix values_;
  MissingMask mask_;
};

struct RowPartition {
  std::vector<std::size_t> observed;
  std::vector<std::size_t> missing;
};

IncompleteData apply_mask(const DataMatrix& x, const MissingMask& m);

/// Distinct mask rows with their counts, in lexicographic order of the bits.
std::vector<Pattern> extract_patterns(const MissingMask& m);

RowPartition observed_row_index(const IncompleteData& data, std::size_t j);

/// Fills the NA cells of `data` from `truth`.
DataMatrix fill_from(const IncompleteData& data, const DataMatrix& truth);

/// True when every observed cell of `data` is bit-identical in `completed`.
bool preserves_observed(const IncompleteData& data, const Matrix& completed);

}  // namespace marimpute
