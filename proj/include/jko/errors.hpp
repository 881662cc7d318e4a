#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jko {

// Invalid configuration (dimension/kind mismatch, bad hyperparameters, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument to an otherwise well-configured operation.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The target does not support the requested capability (e.g. exact sampling).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A resampler could not deliver the requested number of fresh draws.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors that happen at a definite position of an iterative procedure carry
// that position: the integrator step, the optimizer iteration or the stack step.
class IndexedError : public std::runtime_error {
 public:
  IndexedError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (at index " + std::to_string(index) + ")"),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class IntegrationError : public IndexedError {
 public:
  using IndexedError::IndexedError;
};

class TrainingError : public IndexedError {
 public:
  using IndexedError::IndexedError;
};

class SamplerError : public IndexedError {
 public:
  using IndexedError::IndexedError;
};

// Wraps an error raised while training or evaluating step `index` of a stack.
class StepError : public IndexedError {
 public:
  using IndexedError::IndexedError;
};

}  // namespace jko
