#pragma once

#include <stdexcept>
#include <string>

namespace anesi {

// Invalid shapes, widths or configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values reached the optimizer or a loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An exact oracle was asked to enumerate more worlds than allowed.
class EnumerationLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every option of a factor was masked out. Never raised behind a sound pruner.
class DeadBranchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kCountMismatch, kFormat };

  ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace anesi
