#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onorm {

// Operand dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf where a finite value is required, or a degenerate statistic.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Forward/backward handshake violated on a stateful normalizer.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training loss left the finite/bounded regime.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  // 1-based; 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace onorm
