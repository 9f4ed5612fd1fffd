#pragma once

#include <stdexcept>
#include <string>

namespace pathomil {

// Violation of an API precondition: dimension mismatch, out-of-range index,
// argument outside its documented domain. These indicate caller bugs.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Malformed, truncated, or otherwise unreadable file content.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failure during training or evaluation (non-finite loss,
// degenerate input that cannot be scored).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pathomil
