// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace engage {

// Root of every error raised by the library. The CLI maps the two families
// below onto exit codes: usage errors exit 1, runtime errors exit 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a contract: bad arguments, bad config, bad input files.
class UsageError : public Error {
 public:
  using Error::Error;
};

// The computation itself failed: non-finite values, corrupt checkpoints.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

class ParameterError : public UsageError {
 public:
  using UsageError::UsageError;
};

class ContractError : public UsageError {
 public:
  using UsageError::UsageError;
};

class IngestionError : public UsageError {
 public:
  using UsageError::UsageError;
};

class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

class NumericError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class CheckpointError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace engage
