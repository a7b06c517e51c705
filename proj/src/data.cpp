#include "marimpute/data.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <string>

#include "marimpute/errors.hpp"

namespace marimpute {

namespace {

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void check_names(const std::vector<std::string>& names, std::size_t cols) {
  if (!names.empty() && names.size() != cols)
    throw DataError("expected " + std::to_string(cols) + " column names, got " +
                    std::to_string(names.size()));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_)
    throw DataError("matrix storage size " + std::to_string(values_.size()) +
                    " does not match shape " + shape(rows, cols));
}

std::vector<double> Matrix::column(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

MissingMask::MissingMask(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, 0) {}

MissingMask::MissingMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows_ * cols_)
    throw DataError("mask storage size does not match shape " + shape(rows, cols));
  for (auto& e : entries_) {
    if (e > 1) throw DataError("mask entries must be 0 or 1");
  }
}

std::size_t MissingMask::missing_count() const {
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), std::uint8_t{1}));
}

std::size_t MissingMask::missing_in_column(std::size_t j) const {
  std::size_t c = 0;
  for (std::size_t i = 0; i < rows_; ++i) c += entries_[i * cols_ + j];
  return c;
}

DataMatrix::DataMatrix(Matrix values, std::vector<std::string> column_names)
    : values_(std::move(values)), names_(std::move(column_names)) {
  if (values_.rows() == 0 || values_.cols() == 0)
    throw DataError("data matrix must have at least one row and one column");
  for (std::size_t i = 0; i < values_.rows(); ++i)
    for (std::size_t j = 0; j < values_.cols(); ++j)
      if (!std::isfinite(values_(i, j)))
        throw DataError("non-finite value in complete data at row " + std::to_string(i + 1) +
                        ", column " + std::to_string(j + 1));
  check_names(names_, values_.cols());
}

IncompleteData::IncompleteData(Matrix values, std::vector<std::string> column_names)
    : values_(std::move(values)),
      mask_(values_.rows(), values_.cols()),
      names_(std::move(column_names)) {
  for (std::size_t i = 0; i < values_.rows(); ++i)
    for (std::size_t j = 0; j < values_.cols(); ++j) {
      if (is_na(values_(i, j))) {
        mask_.set(i, j, true);
        values_(i, j) = kNA;
      } else if (!std::isfinite(values_(i, j))) {
        throw DataError("infinite value at row " + std::to_string(i + 1));
      }
    }
  check_names(names_, values_.cols());
}

IncompleteData::IncompleteData(Matrix values, MissingMask mask, std::vector<std::string> column_names)
    : values_(std::move(values)), mask_(std::move(mask)), names_(std::move(column_names)) {
  if (mask_.rows() != values_.rows() || mask_.cols() != values_.cols())
    throw DataError("mask shape " + shape(mask_.rows(), mask_.cols()) + " does not match data shape " +
                    shape(values_.rows(), values_.cols()));
  for (std::size_t i = 0; i < values_.rows(); ++i)
    for (std::size_t j = 0; j < values_.cols(); ++j)
      if (is_na(values_(i, j)) != mask_.missing(i, j))
        throw DataError("NA cell and mask disagree at row " + std::to_string(i + 1) + ", column " +
                        std::to_string(j + 1));
  check_names(names_, values_.cols());
}

CompletedDataset::CompletedDataset(Matrix values, MissingMask source_mask)
    : values_(std::move(values)), mask_(std::move(source_mask)) {
  if (mask_.rows() != values_.rows() || mask_.cols() != values_.cols())
    throw DataError("completed data and source mask differ in shape");
}

IncompleteData apply_mask(const DataMatrix& x, const MissingMask& m) {
  if (x.rows() != m.rows() || x.cols() != m.cols())
    throw DataError("cannot apply " + shape(m.rows(), m.cols()) + " mask to " +
                    shape(x.rows(), x.cols()) + " data");
  Matrix out = x.values();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      if (m.missing(i, j)) out(i, j) = kNA;
  return IncompleteData(std::move(out), m, x.column_names());
}

std::vector<Pattern> extract_patterns(const MissingMask& m) {
  std::map<std::vector<std::uint8_t>, std::size_t> counts;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    ++counts[std::vector<std::uint8_t>(r.begin(), r.end())];
  }
  std::vector<Pattern> out;
  out.reserve(counts.size());
  for (auto& [bits, count] : counts) out.push_back({bits, count});
  return out;
}

RowPartition observed_row_index(const IncompleteData& data, std::size_t j) {
  if (j >= data.cols())
    throw DataError("column index " + std::to_string(j) + " out of range");
  RowPartition p;
  for (std::size_t i = 0; i < data.rows(); ++i)
    (data.mask().missing(i, j) ? p.missing : p.observed).push_back(i);
  return p;
}

DataMatrix fill_from(const IncompleteData& data, const DataMatrix& truth) {
  if (truth.rows() != data.rows() || truth.cols() != data.cols())
    throw DataError("truth shape does not match incomplete data");
  Matrix out = data.values();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      if (data.mask().missing(i, j)) out(i, j) = truth(i, j);
  return DataMatrix(std::move(out), data.column_names());
}

bool preserves_observed(const IncompleteData& data, const Matrix& completed) {
  if (completed.rows() != data.rows() || completed.cols() != data.cols()) return false;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j)
      if (!data.mask().missing(i, j) &&
          std::bit_cast<std::uint64_t>(data(i, j)) != std::bit_cast<std::uint64_t>(completed(i, j)))
        return false;
  return true;
}

}  // namespace marimpute
