#pragma once

#include <stdexcept>
#include <string>

namespace covi {

// Violated precondition of a library call (bad argument values, misuse).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Tensor shapes that do not line up for an operation.
class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

// Filesystem / format problems while reading or writing artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by the trainer when a loss turns non-finite.
class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace covi
