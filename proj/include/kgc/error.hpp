#pragma once

#include <stdexcept>
#include <string>

namespace kgc {

/// Base for every error the library raises. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 2; }
};

/// Invalid configuration value; message names the offending field.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Operand shapes are incompatible for a primitive.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by a computation, or training divergence.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

}  // namespace kgc
