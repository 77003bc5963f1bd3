#pragma once

#include <stdexcept>
#include <string>

namespace osplit {

// Numerically rank-deficient input where a full-rank factorization was
// required (e.g. QR pivot below threshold).
struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Wire-level failures are distinguishable: a frame that can never parse
// (bad magic, bad type, bad length) vs. one that is merely truncated vs. a
// version this implementation does not speak.
struct WireError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptFrame : WireError {
  using WireError::WireError;
};
struct IncompleteFrame : WireError {
  using WireError::WireError;
};
struct UnsupportedVersion : WireError {
  using WireError::WireError;
};

// Transport failures.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Disconnected : TransportError {
  using TransportError::TransportError;
};
struct TimedOut : TransportError {
  using TransportError::TransportError;
};

// A message arrived that the peer's phase machine cannot accept.
struct ProtocolOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration file / flag problems (exit code 2 at the CLI).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset file problems.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InconsistentPair : FormatError {
  using FormatError::FormatError;
};

// Partitioner could not produce non-empty shards within the retry budget.
struct PartitionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace osplit
