#pragma once

#include <stdexcept>
#include <string>

namespace probshift {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed data of the wrong shape (dimension mismatch, out-of-domain point).
class InputError : public Error {
public:
    using Error::Error;
};

/// A document (JSON, CSV) could not be parsed or failed schema validation.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A well-formed object violates a structural invariant (dangling child id, bad class...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A leaf box or box intersection turned out to be empty where a point was required.
class DegenerateBoxError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace probshift
