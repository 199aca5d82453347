#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deferral {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input line. `line()` is 1-based; `source()` names the stream.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)),
          line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

/// A cross-reference that does not resolve (e.g. an action on an unknown message).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// A value outside its declared domain.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An invalid generator or training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data that an operation cannot work with (degenerate labels, empty cohort, ...).
class DataError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

}  // namespace deferral
