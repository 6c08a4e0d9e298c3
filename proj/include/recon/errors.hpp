#pragma once

#include <stdexcept>
#include <string>

namespace recon {

/// Invalid configuration or arguments. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that cannot be used as given. CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure such as a diverged training run. CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FileNotFound : public DataError {
public:
    explicit FileNotFound(const std::string& path)
        : DataError("file not found: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class MalformedHeader : public DataError {
public:
    using DataError::DataError;
};

class BadTimestamp : public DataError {
public:
    BadTimestamp(const std::string& file, std::size_t line, const std::string& text)
        : DataError(file + ":" + std::to_string(line) + ": bad timestamp '" + text + "'"),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyInput : public DataError {
public:
    using DataError::DataError;
};

class LengthMismatch : public DataError {
public:
    using DataError::DataError;
};

class Diverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace recon
