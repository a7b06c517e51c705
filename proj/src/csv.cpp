#include "marimpute/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "marimpute/errors.hpp"

namespace marimpute::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

double parse_cell(std::string_view cell, std::size_t line_no, std::size_t col) {
  if (cell == kNAToken) return kNA;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ", column " + std::to_string(col + 1) +
                    ": non-numeric cell '" + std::string(cell) + "'");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

IncompleteData read_incomplete(std::istream& in, const Options& opts) {
  std::vector<std::string> names;
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = opts.header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line, opts.delimiter);
    if (header_pending) {
      for (auto c : cells) names.emplace_back(c);
      cols = cells.size();
      header_pending = false;
      continue;
    }
    if (cols == 0) cols = cells.size();
    if (cells.size() != cols)
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                      " cells, found " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) values.push_back(parse_cell(cells[j], line_no, j));
    ++rows;
  }
  if (rows == 0) throw DataError("no data rows");
  return IncompleteData(Matrix(rows, cols, std::move(values)), std::move(names));
}

IncompleteData read_incomplete(const std::filesystem::path& path, const Options& opts) {
  auto in = open_in(path);
  return read_incomplete(in, opts);
}

DataMatrix read_complete(std::istream& in, const Options& opts) {
  auto data = read_incomplete(in, opts);
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j)
      if (data.mask().missing(i, j))
        throw DataError("NA in complete data at data row " + std::to_string(i + 1) + ", column " +
                        std::to_string(j + 1));
  return DataMatrix(data.values(), data.column_names());
}

DataMatrix read_complete(const std::filesystem::path& path, const Options& opts) {
  auto in = open_in(path);
  return read_complete(in, opts);
}

std::string format_double(double v) {
  if (is_na(v)) return kNAToken;
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write(std::ostream& out, const Matrix& values, const std::vector<std::string>& names,
           const Options& opts) {
  if (opts.header) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      if (j) out << opts.delimiter;
      out << (names.size() == values.cols() ? names[j] : "X" + std::to_string(j + 1));
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      if (j) out << opts.delimiter;
      out << format_double(values(i, j));
    }
    out << '\n';
  }
}

void write(const std::filesystem::path& path, const Matrix& values,
           const std::vector<std::string>& names, const Options& opts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write(out, values, names, opts);
}

}  // namespace marimpute::csv
