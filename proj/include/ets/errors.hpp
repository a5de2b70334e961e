#pragma once

#include <stdexcept>
#include <string>

namespace ets {

/// Unknown, pruned or otherwise unusable node id.
class InvalidNode : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A structural constraint (e.g. "retain at least one leaf") would be broken.
class ConstraintViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Backend failures. Each class is surfaced separately in a problem result.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "backend"; }
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
  const char* kind() const noexcept override { return "transport"; }
};

class SchemaError : public BackendError {
 public:
  using BackendError::BackendError;
  const char* kind() const noexcept override { return "schema"; }
};

class RewardRangeError : public BackendError {
 public:
  using BackendError::BackendError;
  const char* kind() const noexcept override { return "reward_range"; }
};

}  // namespace ets
