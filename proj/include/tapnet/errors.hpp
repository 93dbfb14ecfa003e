#pragma once

#include <stdexcept>
#include <string>

namespace tapnet {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Bad configuration or usage: unknown keys, invalid flag values, way overflow.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset or file-content problems: missing paths, unreadable samples,
/// malformed checkpoints.
class DataError : public Error {
public:
    using Error::Error;
};

/// Shape or dimension mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a numeric routine that failed to produce a valid result.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A vector with no usable direction (norm below tolerance) where one is required.
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Operation invoked out of order (e.g. backward with no recorded forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Reserved switch that is accepted but has no implementation yet.
class NotImplementedError : public Error {
public:
    using Error::Error;
};

} // namespace tapnet
