#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nmrdeco {

// Bad caller input: malformed files, out-of-range arguments, unknown labels.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computed object broke one of its mathematical invariants
// (non-Hermitian state, non-unitary propagator, oracle mismatch).
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Lexer/parser failure with a 1-based source position.
class SyntaxError : public InputError {
 public:
  SyntaxError(std::size_t line, std::size_t column, const std::string& message)
      : InputError("line " + std::to_string(line) + ", column " +
                   std::to_string(column) + ": " + message),
        line_(line),
        column_(column),
        message_(message) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;
};

}  // namespace nmrdeco
