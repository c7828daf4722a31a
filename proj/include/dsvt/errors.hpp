#pragma once

#include <stdexcept>
#include <string>

namespace dsvt {

// Malformed input data (non-finite points, unreadable files).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or incomplete configuration. The message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape mismatch, wrong layout).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An internal guarantee failed to hold.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace dsvt
