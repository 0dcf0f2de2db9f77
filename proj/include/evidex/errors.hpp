#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evidex {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised while ingesting a dataset file. `line()` is 1-based, 0 when the
/// error is not tied to a single record.
class DatasetError : public Error {
public:
    DatasetError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class MissingSegmentError : public Error {
public:
    using Error::Error;
};

class DegenerateGroupError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace evidex
