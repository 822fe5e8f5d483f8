#pragma once

#include <stdexcept>
#include <string>

namespace sfim {

// Base of every exception the library throws. The CLI maps the derived
// kinds onto its exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values, diverging losses, failed numeric invariants.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace sfim
