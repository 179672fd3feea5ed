#pragma once

#include <stdexcept>
#include <string>

namespace hyphgt {

// Operand shapes do not conform for the requested operation.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// A value left the domain of a function (zero denominator, negative radicand,
// non-finite result).
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// A caller violated an API precondition.
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

// Input data failed validation (bad graph files, labels out of range, ...).
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Training or optimisation produced a non-finite quantity.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace hyphgt
