#pragma once

#include <stdexcept>
#include <string>

namespace msvdd {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes do not conform (matmul inner dims, window lengths, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed or unsupported input file content.
class FormatError : public Error {
public:
    using Error::Error;
};

// Unparseable cell or token; carries location in the message.
class ParseError : public FormatError {
public:
    using FormatError::FormatError;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Factorization failure, non-finite values, ...
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace msvdd
