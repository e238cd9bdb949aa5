#pragma once

#include <stdexcept>
#include <string>

namespace deblur {

// Base class for everything the library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Bad argument value (out of range, unnormalized kernel, unknown key, ...).
struct ValueError : Error {
    using Error::Error;
};

// File or directory problem.
struct IoError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required (training divergence signal).
struct NumericalError : Error {
    using Error::Error;
};

} // namespace deblur
