#pragma once

#include <stdexcept>

namespace argex {

// Invalid input data, files, or configuration. CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numeric checks. CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace argex
