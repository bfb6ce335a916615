#pragma once

#include <stdexcept>
#include <string>

namespace modelprox {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
  using Error::Error;
};

// Factorization or other numerical breakdown; pivot_index identifies the
// offending pivot when known, -1 otherwise.
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg, int pivot = -1)
      : Error(msg), pivot_index(pivot) {}
  int pivot_index;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct OutOfDomainError : Error {
  using Error::Error;
};

}  // namespace modelprox
