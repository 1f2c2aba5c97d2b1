#pragma once

#include <stdexcept>
#include <string>

namespace qpae {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (input length, matrix dims, dataset feature width).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A class index outside [0, K) or an otherwise malformed forget set.
class InvalidClassError : public Error {
public:
    using Error::Error;
};

/// Rejected configuration: bad hyperparameters, unknown keys, missing fields.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf surfaced where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace qpae
