#pragma once

#include <stdexcept>
#include <string>

namespace glottochron {

// Caller violated a precondition (bad argument, wrong node, too few samples).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input text. `location` is a 1-based line number or a 0-based
// character offset, depending on the format being parsed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, long location)
      : std::runtime_error{message}, location_{location} {}
  auto location() const -> long { return location_; }

 private:
  long location_;
};

// Inputs parse but are inconsistent with each other (unknown taxon, bad bounds).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Run configuration is missing a key, has an unknown key or an invalid value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite or degenerate intermediate in a likelihood or prior computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace glottochron
