#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metaview {

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorKind { config, data, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ZeroVector : Error {
  ZeroVector() : Error(ErrorKind::numeric, "zero-length vector cannot be normalized") {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& what)
      : Error(ErrorKind::data, "shape mismatch: " + what) {}
};

struct MalformedRow : Error {
  explicit MalformedRow(std::size_t row, const std::string& why = "")
      : Error(ErrorKind::data, "malformed row " + std::to_string(row) +
                                   (why.empty() ? "" : ": " + why)),
        index(row) {}
  std::size_t index;
};

struct MissingColumn : Error {
  explicit MissingColumn(const std::string& column)
      : Error(ErrorKind::data, "missing column '" + column + "'"), name(column) {}
  std::string name;
};

struct EmptyTrace : Error {
  EmptyTrace() : Error(ErrorKind::data, "trace has no samples") {}
};

struct LeadingGap : Error {
  LeadingGap() : Error(ErrorKind::data, "first tick of trace is empty") {}
};

struct TraceTooShort : Error {
  TraceTooShort(std::size_t length, std::size_t needed)
      : Error(ErrorKind::data, "trace of length " + std::to_string(length) +
                                   " is too short; need more than " +
                                   std::to_string(needed)) {}
};

struct EmptyPool : Error {
  EmptyPool() : Error(ErrorKind::data, "task pool is empty") {}
};

struct EmptyInput : Error {
  explicit EmptyInput(const std::string& what)
      : Error(ErrorKind::data, "empty input: " + what) {}
};

struct MismatchedCohorts : Error {
  explicit MismatchedCohorts(const std::string& what)
      : Error(ErrorKind::data, "mismatched cohorts: " + what) {}
};

struct NonPositiveInput : Error {
  explicit NonPositiveInput(const std::string& what)
      : Error(ErrorKind::data, "non-positive input: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

}  // namespace metaview
