#pragma once

#include <stdexcept>
#include <string>

namespace mplp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf where a finite value is required.
struct NumericError : Error {
    using Error::Error;
};

// Violated precondition or broken invariant.
struct ContractError : Error {
    using Error::Error;
};

// Out-of-range index (e.g. a gold class id past the logit width).
struct IndexError : Error {
    using Error::Error;
};

// Malformed input file.
struct ParseError : Error {
    using Error::Error;
};

// Inconsistent or invalid configuration.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace mplp
