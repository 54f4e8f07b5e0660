#pragma once

#include <stdexcept>
#include <string>

namespace supermask {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or lengths that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered, or training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A value outside an operation's precondition (prune rate, fan-in, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Unreadable or corrupt input file (dataset, checkpoint).
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace supermask
