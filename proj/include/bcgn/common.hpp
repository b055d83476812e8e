#pragma once

#include <stdexcept>
#include <string>

namespace bcgn {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
    using Error::Error;
};

// Non-finite values, failed numeric checks.
struct NumericError : Error {
    using Error::Error;
};

// Invalid configuration (bad hyperparameters, unknown keys, ...).
struct ConfigError : Error {
    using Error::Error;
};

// File format / serialization problems.
struct IoError : Error {
    using Error::Error;
};

}  // namespace bcgn
