#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgcn {

// Exit codes shared by every command-line entry point.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::usage; }
};

// Bad configuration, bad arguments, mismatched checkpoints.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or dimension contract violated by a caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
  DataError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  ExitCode exit_code() const noexcept override { return ExitCode::data; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Non-finite loss or values during training.
class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

inline std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(dims[i]);
  }
  return s + ")";
}

}  // namespace fgcn
