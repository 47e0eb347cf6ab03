// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace osd {

/// Base for every error raised by the library. `kind()` lets callers map
/// failures to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  enum class Kind { Argument, Format, Integrity, Data, Structural, Numeric, Evaluation };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(Kind::Argument, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(Kind::Format, w) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(Kind::Integrity, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(Kind::Data, w) {}
};
struct StructuralError : Error {
  explicit StructuralError(const std::string& w) : Error(Kind::Structural, w) {}
};

// Raised when an iterative SVD fails to reach its tolerance.
struct NumericError : Error {
  NumericError(const std::string& w, double residual)
      : Error(Kind::Numeric, w), residual(residual) {}
  double residual;
};

// Raised by evaluation hooks; `c` is the rank relaxation being scored.
struct EvaluationError : Error {
  EvaluationError(const std::string& w, int c) : Error(Kind::Evaluation, w), c(c) {}
  int c;
};

}  // namespace osd
