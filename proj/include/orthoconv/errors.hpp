#pragma once

#include <stdexcept>
#include <string>

namespace orthoconv {

/// Raised when tensor extents, channel counts or divisibility constraints
/// do not line up.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised for configurations that are well formed but for which no
/// orthogonal kernel can be built (e.g. stride larger than kernel size).
class UnsupportedConfiguration : public std::runtime_error {
 public:
  explicit UnsupportedConfiguration(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a factorization or inversion breaks down.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

template <typename Error = ShapeError>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace detail
}  // namespace orthoconv
