#pragma once

#include <stdexcept>
#include <string>

namespace dfcn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed files, bad configs, inconsistent inputs. CLI exit code 2.
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf detected in a forward pass or in gradients. CLI exit code 3.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace dfcn
