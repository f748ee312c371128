#pragma once

#include <stdexcept>
#include <string>

namespace cotlab {

// Bad argument values: out-of-range indices, malformed tuples, empty batches.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Inconsistent configuration: missing latent token, head/slot mismatch,
// missing render templates.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A data structure violates its own invariants (cycles, dangling ids).
class StructuralError : public std::runtime_error {
 public:
  explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cotlab
