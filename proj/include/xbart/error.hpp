#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xbart {

/// Malformed or out-of-domain user input (bad CSV cell, non-finite value,
/// invalid configuration). Maps to CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numeric breakdown inside the sampler (overflow, non-finite residual).
/// Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal bookkeeping became inconsistent (e.g. split counts drifted).
class AccountingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Model file could not be parsed. `offset` is the byte position where
/// parsing stopped.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : InputError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Model file carries a format version this build cannot read.
class IncompatibleVersion : public InputError {
 public:
  IncompatibleVersion(int found, int supported)
      : InputError("model format version " + std::to_string(found) +
                   " is not supported (this build reads version " + std::to_string(supported) + ")"),
        found_(found) {}

  int found() const noexcept { return found_; }

 private:
  int found_;
};

namespace detail {

inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace detail

}  // namespace xbart
