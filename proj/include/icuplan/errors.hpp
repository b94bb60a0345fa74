#pragma once

#include <stdexcept>
#include <string>

namespace icu {

// Base of every error raised by the library. `code()` is the short machine
// identifier that the service error envelope carries.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("invalid_argument", message) {}
};

// Raised when a computation produces a NaN/Inf; `step` is the offending
// iteration (integration step, optimizer step, ...).
class NumericalError : public Error {
 public:
  NumericalError(const std::string& message, long step)
      : Error("numerical_error", message + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class SingularKernel : public Error {
 public:
  explicit SingularKernel(const std::string& message) : Error("singular_kernel", message) {}
};

class DegenerateSlice : public Error {
 public:
  explicit DegenerateSlice(const std::string& message) : Error("degenerate_slice", message) {}
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& message) : Error("not_found", message) {}
};

// Tabular input that violates its schema. Row and column are 1-based
// (row 1 is the header line); 0 means "not applicable".
class SchemaError : public Error {
 public:
  SchemaError(const std::string& message, long row = 0, long column = 0)
      : Error("schema_error", message), row_(row), column_(column) {}
  long row() const noexcept { return row_; }
  long column() const noexcept { return column_; }

 private:
  long row_;
  long column_;
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& message) : Error("integrity_error", message) {}
};

}  // namespace icu
