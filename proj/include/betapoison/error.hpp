#pragma once

#include <stdexcept>
#include <string>

namespace betapoison {

// Every failure surfaced by the library derives from Error. The CLI maps the
// categories onto exit codes (argument 2, data 3, io 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed a value outside an operation's domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Input bytes do not follow the expected file format.
class FormatError : public Error {
public:
    using Error::Error;
};

// Inputs are individually well formed but disagree with each other.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

// Not enough samples to carry out the request.
class CapacityError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace betapoison
