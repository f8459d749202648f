#pragma once

#include <stdexcept>
#include <string>

namespace geoqhd {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclass onto its exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rejected input data: bad prices, unparseable cells, degenerate columns.
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or combination of values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Operation called on an object in the wrong state (empty history,
/// dimension mismatch, stopping time not yet available).
class StateError : public Error {
public:
    using Error::Error;
};

/// Output destination that cannot be created or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A column with zero variance where a correlation is required.
class DegenerateVariableError : public DataError {
public:
    DegenerateVariableError(std::size_t column, const std::string& what)
        : DataError(what), column_(column) {}

    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

}  // namespace geoqhd
