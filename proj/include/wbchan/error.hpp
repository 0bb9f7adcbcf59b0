#pragma once

#include <stdexcept>
#include <string>

namespace wbchan {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent configuration (bad keys, impossible parameter
/// combinations, strategy/medium mismatches).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Backend I/O failures and contract violations on a medium (role misuse,
/// unit out of range, primitive/mode mismatch).
class MediumError : public Error {
 public:
  using Error::Error;
};

/// Payload/framing violations (length header overflow, malformed input).
class CodecError : public Error {
 public:
  using Error::Error;
};

/// Raised when the cached/uncached separation is too small to carry bits.
class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Peer never showed up (or never signalled) within the configured window.
class HandshakeTimeout : public Error {
 public:
  using Error::Error;
};

/// A resync boundary decoded a wrong synchronization sequence.
class AbortRound : public Error {
 public:
  using Error::Error;
};

}  // namespace wbchan
