#pragma once

#include <stdexcept>
#include <string>

namespace marimpute {

// Malformed or inconsistent input data (CSV contents, shapes, masks).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment / CLI configuration, unknown mechanism or model names.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A requested analysis is not defined for the given mechanism.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace marimpute
