#pragma once

#include <stdexcept>
#include <string>

namespace gidx {

/// Base class for all gidx errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments, broken invariants, rejected inputs.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed input files (message carries the line number where known).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem and serialization failures.
class IoError : public Error {
public:
    using Error::Error;
};

/// Operation called on an object in the wrong state (e.g. untrained model).
class StateError : public Error {
public:
    using Error::Error;
};

} // namespace gidx
