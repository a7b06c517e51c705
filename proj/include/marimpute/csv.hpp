#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "marimpute/data.hpp"

namespace marimpute::csv {

inline constexpr const char* kNAToken = "NA";

struct Options {
  bool header = true;
  char delimiter = ',';
};

/// Parses numeric CSV; cells equal to "NA" become missing. Errors name the line.
IncompleteData read_incomplete(std::istream& in, const Options& opts = {});
IncompleteData read_incomplete(const std::filesystem::path& path, const Options& opts = {});

/// As read_incomplete but rejects NA cells.
DataMatrix read_complete(std::istream& in, const Options& opts = {});
DataMatrix read_complete(const std::filesystem::path& path, const Options& opts = {});

/// Shortest round-trip decimal representation; NaN cells are written as NA.
void write(std::ostream& out, const Matrix& values, const std::vector<std::string>& names,
           const Options& opts = {});
void write(const std::filesystem::path& path, const Matrix& values,
           const std::vector<std::string>& names, const Options& opts = {});

std::string format_double(double v);

}  // namespace marimpute::csv
