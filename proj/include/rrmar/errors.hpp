#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rrmar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or ranks that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A covariance (or a matrix that must be one) failed its Cholesky factorization.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// Non-finite entries supplied where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// The bottom square block of U1 (or U2) is singular, so the identity-top
/// normalization cannot be applied in the current ordering. The suggested
/// permutations move an invertible set of rows to the bottom.
class NonRotatableError : public Error {
 public:
  NonRotatableError(const std::string& what, std::vector<int> row_perm, std::vector<int> col_perm)
      : Error(what), suggested_row_order(std::move(row_perm)), suggested_col_order(std::move(col_perm)) {}
  std::vector<int> suggested_row_order;
  std::vector<int> suggested_col_order;
};

/// The autoregressive recursion is explosive or has a unit root.
class NonStationaryError : public Error {
 public:
  using Error::Error;
};

/// Raised by numerical routines (line search, Hessian, SNR rescaling) that could not finish.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files or configuration.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rrmar
