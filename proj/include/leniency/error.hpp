#pragma once

#include <stdexcept>
#include <string>

namespace leniency {

// Bad input files, schemas, or flags. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid simulation or run configuration (exit code 2).
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// The design cannot support the requested computation: everything pruned,
// leverage-one rows, singular FEJIV system, capacity limits (exit code 3).
class DegenerateDesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapacityError : public DegenerateDesignError {
 public:
  using DegenerateDesignError::DegenerateDesignError;
};

}  // namespace leniency
