#pragma once

#include <stdexcept>
#include <string>

namespace gdse {

// Raised for malformed or unreadable user inputs (files, configs). Precondition
// violations on API arguments use std::invalid_argument.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a numerical computation produced a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace detail

}  // namespace gdse
