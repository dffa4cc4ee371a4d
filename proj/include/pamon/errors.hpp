#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pamon {

// Precondition violated by a caller-supplied value.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration that cannot be realised (e.g. sampling below the Nyquist margin).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sample appended out of time order.
class OrderingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid session state transition. `code()` is a stable machine-readable token
// that goes out on the wire.
class StateError : public std::runtime_error {
 public:
  StateError(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Malformed session file or wire message. `line()` is 1-based; `last_valid_line()`
// is the last line that parsed cleanly (0 if none).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t last_valid_line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what +
                           " (last valid line " + std::to_string(last_valid_line) + ")"),
        line_(line),
        last_valid_(last_valid_line) {}
  std::size_t line() const { return line_; }
  std::size_t last_valid_line() const { return last_valid_; }

 private:
  std::size_t line_;
  std::size_t last_valid_;
};

}  // namespace pamon
