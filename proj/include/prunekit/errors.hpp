#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace prunekit {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operator dimension mismatch; message names the offending axes.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Checkpoint parsing failures, one kind per failure mode.
struct CheckpointError : Error {
  enum class Kind { BadMagic, BadVersion, Truncated, Malformed };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Dataset file parsing failure; carries the byte offset where it happened.
struct IngestError : Error {
  std::uint64_t offset;
  IngestError(std::uint64_t off, const std::string& msg)
      : Error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace prunekit
