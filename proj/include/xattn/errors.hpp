#pragma once

#include <stdexcept>
#include <string>

namespace xattn {

/// Dimension or shape mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic is undefined for the given input (e.g. zero variance).
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// NaN or Inf encountered where finite values are required.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xattn
