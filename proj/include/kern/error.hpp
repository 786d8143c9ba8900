#pragma once
// Exception hierarchy shared by the library and the CLI exit-code mapping.

#include <stdexcept>
#include <string>

namespace kern {

// Malformed input: bad file syntax, bad magic, unreadable flags.
class parse_error : public std::runtime_error {
public:
  explicit parse_error(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that violates a contract (shape mismatch,
// label out of range, schema disagreement, ...).
class validation_error : public std::runtime_error {
public:
  explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

// Shape/dimension contract violations in tensor ops.
class dimension_error : public validation_error {
public:
  explicit dimension_error(const std::string& what) : validation_error(what) {}
};

// NaN/Inf values, training divergence.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kern
