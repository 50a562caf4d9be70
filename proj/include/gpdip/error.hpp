#pragma once

#include <stdexcept>
#include <string>

namespace gpdip {

// Shapes, extents or arguments that violate an operation's preconditions.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failure: non-finite values, failed factorization, divergence.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents (netpbm, csv, kernel files, json specs).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gpdip
