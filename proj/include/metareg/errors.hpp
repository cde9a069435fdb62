#pragma once

#include <stdexcept>
#include <string>

namespace metareg {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or axis mismatch between tensors. Messages name the offending axis.
struct DimensionError : Error {
    using Error::Error;
};

// Malformed input data (labels not one-hot, bad episode batch, ...).
struct ValidationError : Error {
    using Error::Error;
};

// Broken API contract (non-scalar loss passed to backward, ...).
struct ContractError : Error {
    using Error::Error;
};

// Invalid or inconsistent experiment configuration.
struct ConfigError : Error {
    using Error::Error;
};

// NaN/Inf surfaced where finite values are required.
struct NumericError : Error {
    using Error::Error;
};

// Dataset cannot satisfy a sampling request.
struct SamplingError : Error {
    using Error::Error;
};

// Filesystem / decoding / network failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace metareg
