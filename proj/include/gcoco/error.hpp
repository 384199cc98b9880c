#pragma once

#include <stdexcept>
#include <string>

namespace gcoco {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, bad id, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// NaN / infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input files (JSONL records, configs).
class ParseError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kMissingNames, kIo, kMalformed };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace gcoco
