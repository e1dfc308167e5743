#pragma once

#include <stdexcept>
#include <string>

namespace pileup {

// Invalid argument or configuration value.
class ParameterError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Truncated distribution whose acceptance region carries too little mass.
class InfeasibleBoundsError : public ParameterError {
  public:
    using ParameterError::ParameterError;
};

// Shape whose samples all underflow to zero.
class DegenerateShapeError : public ParameterError {
  public:
    using ParameterError::ParameterError;
};

// A rate estimator had nothing to count (no events, zero horizon, no idle run).
class UndefinedRateError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. Line is 1-based, 0 when not applicable.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace pileup
