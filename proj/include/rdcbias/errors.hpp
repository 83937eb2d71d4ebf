#pragma once

#include <stdexcept>
#include <string>

namespace rdcbias {

// Bad caller input: malformed files, shape mismatches, invalid parameters.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A well-formed problem that cannot be solved numerically (rank deficiency,
// degenerate spectrum, collinear atoms).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rdcbias
