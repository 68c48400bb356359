#pragma once

#include <stdexcept>
#include <string>

namespace levelset {

/// A direction whose norm is too small to normalize or project onto.
class DegenerateDirectionError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Operand dimensions that do not line up.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Overflow or NaN in a loss or gradient evaluation.
class NumericalFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, long line = 0)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const noexcept { return line_; }

private:
  long line_;
};

/// Binary container with the wrong magic number or truncated payload.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UnsupportedMetricError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace levelset
