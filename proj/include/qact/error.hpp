#pragma once

#include <stdexcept>
#include <string>

namespace qact {

// Base class for every failure this library reports.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (weight files, frames, payloads).
struct FormatError : Error {
    using Error::Error;
};

struct BadMagicError : FormatError {
    using FormatError::FormatError;
};

struct VersionMismatchError : FormatError {
    using FormatError::FormatError;
};

struct TruncatedFileError : FormatError {
    using FormatError::FormatError;
};

// Invalid network/layer configuration: parse errors, invariant violations,
// shape-chain mismatches, accumulator bound violations.
struct ConfigError : Error {
    using Error::Error;
};

// No tiling plan satisfies the resource budget.
struct InfeasibleError : Error {
    using Error::Error;
};

} // namespace qact
