#pragma once

#include <stdexcept>
#include <string>

namespace mmgl {

// Root of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible matrix or feature shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-domain scalar argument (tau <= 0, K > N, lr <= 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

// Invalid configuration file or option combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

// API misuse, e.g. running backward twice on one tape.
class UsageError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite value.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace mmgl
