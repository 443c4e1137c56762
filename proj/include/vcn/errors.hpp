#pragma once

#include <stdexcept>
#include <string>

namespace vcn {

// Bad user input: malformed config files, out-of-range parameters,
// inconsistent grids.  The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime numerical failure: non-finite state, singular factorization,
// iteration that refuses to converge.  CLI exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vcn
