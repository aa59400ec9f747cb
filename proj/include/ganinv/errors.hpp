#pragma once

#include <stdexcept>
#include <string>

namespace ganinv {

// Error categories map 1:1 onto CLI exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct BuildError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

// Non-finite value detected at an operation boundary.
struct NumericError : Error {
    using Error::Error;
};

// Corrupt or truncated on-disk artifacts, wrong magic.
struct FormatError : Error {
    using Error::Error;
};

struct VersionError : FormatError {
    using FormatError::FormatError;
};

struct IoError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace ganinv
