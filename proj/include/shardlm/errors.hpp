// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace shardlm {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument is out of its valid range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// An invalid model / run configuration (divisibility, illegal flag combination, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint (MWT1) errors.

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedCheckpointError : public CheckpointError {
 public:
  TruncatedCheckpointError(const std::string& tensor, const std::string& what)
      : CheckpointError(what), tensor_(tensor) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

class CheckpointMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Communication errors.

class CommError : public Error {
 public:
  using Error::Error;
};

/// Peers disagree on a collective: payload length, collective sequence, message type.
class ProtocolError : public CommError {
 public:
  using CommError::CommError;
};

/// Use of a communicator or registered buffer outside its lifetime or owner.
class LifecycleError : public CommError {
 public:
  using CommError::CommError;
};

class TimeoutError : public CommError {
 public:
  using CommError::CommError;
};

class FrameMagicError : public CommError {
 public:
  using CommError::CommError;
};

class TruncatedFrameError : public CommError {
 public:
  using CommError::CommError;
};

class VersionMismatchError : public CommError {
 public:
  using CommError::CommError;
};

class DuplicateRankError : public CommError {
 public:
  using CommError::CommError;
};

class ConnectTimeoutError : public CommError {
 public:
  using CommError::CommError;
};

}  // namespace shardlm
