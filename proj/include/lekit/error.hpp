#pragma once
#include <stdexcept>
#include <string>

namespace lekit {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand shapes do not conform (matmul inner dims, elementwise shapes, ...).
class ShapeError : public Error {
public:
  ShapeError(const std::string& op, const std::string& lhs, const std::string& rhs)
      : Error("shape mismatch in " + op + ": " + lhs + " vs " + rhs),
        op_name(op), lhs_shape(lhs), rhs_shape(rhs) {}
  std::string op_name, lhs_shape, rhs_shape;
};

/// A numeric domain violation or non-finite value, tagged with where it arose.
class NumericError : public Error {
public:
  NumericError(const std::string& where, const std::string& msg)
      : Error(where + ": " + msg), where_name(where) {}
  std::string where_name;
};

/// Input file could not be parsed; `row` is 1-based (0 = header / whole file).
class ParseError : public Error {
public:
  ParseError(std::size_t row_, const std::string& msg)
      : Error("row " + std::to_string(row_) + ": " + msg), row(row_) {}
  std::size_t row;
};

/// Invalid configuration value.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Well-formed input that fails a semantic check (simplex rows, 0/1 labels,
/// inconsistent field sizes).
class DataError : public Error {
public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

}  // namespace lekit
