#pragma once

#include <stdexcept>
#include <string>

namespace tdca {

/// Base for every error the library raises. Callers that only want to report
/// and exit can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, lengths or layer chains that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition on a value (range, sign, finiteness) was violated.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated on-disk data (IDX, CIFAR, checkpoints, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline void require_value(bool ok, const std::string& what) {
  if (!ok) throw ValueError(what);
}

}  // namespace detail
}  // namespace tdca
