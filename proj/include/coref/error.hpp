#pragma once

#include <stdexcept>
#include <string>

namespace coref {

// Each error category maps to its own CLI exit code (see tools/corefpair.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input text; message carries the offending line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Incompatible dimensions, schema versions, or option values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Bad magic, version, or truncated binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A metric that has no value on the given input (e.g. AUC on one class).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Training diverged (non-finite loss).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace coref
