#pragma once

#include <stdexcept>
#include <string>

namespace adabatch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A variance was requested on a batch with fewer than two rows.
class DegenerateBatch : public Error {
public:
    using Error::Error;
};

/// The batch (or full) mean gradient is exactly zero where a direction is needed.
class ZeroMeanGradient : public Error {
public:
    using Error::Error;
};

/// Batch mean gradient too small for a test statistic to be meaningful.
class NearStationaryAmbiguity : public Error {
public:
    using Error::Error;
};

class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

class EmptyBatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

/// An exact-variance test that a diagnostic depends on does not hold.
class PreconditionNotMet : public Error {
public:
    using Error::Error;
};

/// Config text could not be parsed; carries a 1-based source location.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& msg, int line, int column)
        : ConfigError(msg + " (line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ")"),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

}  // namespace adabatch
