#pragma once

#include <stdexcept>
#include <string>

namespace budgeteval {

/// Input file could not be parsed; the message names the offending line.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Parsed data violates a documented invariant (duplicate ids, gaps, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// The host is missing something we need (interpreter, writable dir, ...).
class InfraError : public std::runtime_error {
 public:
  explicit InfraError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace budgeteval
