#pragma once

#include <stdexcept>
#include <string>

namespace dualcap {

/// Training produced a non-finite loss, gradient or estimate.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A channel input lies outside the admissible input alphabet.
class AlphabetError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Shape or provenance mismatch between a recorded tape and the object replaying it.
class TapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace detail
}  // namespace dualcap
