#pragma once

#include <stdexcept>
#include <string>

namespace crtopt {

// Invalid dimensions or structure of a design space, design or parameter set.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidDimension : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// A numeric routine hit a domain problem (non-finite predictor, failed factorisation).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No design with a finite criterion could be produced.
class Infeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crtopt
