#pragma once

#include <stdexcept>
#include <string>

namespace skilltrace {

/// Base of every library error. `category()` is a short machine-parsable tag
/// that the CLI prints in front of the message.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error("parse", file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class EmptyResultError : public Error {
public:
    explicit EmptyResultError(const std::string& what) : Error("empty", what) {}
};

class EncodingError : public Error {
public:
    explicit EncodingError(const std::string& what) : Error("encoding", what) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class FitError : public Error {
public:
    explicit FitError(const std::string& what) : Error("fit", what) {}
};

class MetricError : public Error {
public:
    explicit MetricError(const std::string& what) : Error("metric", what) {}
};

class SchedulingError : public Error {
public:
    explicit SchedulingError(const std::string& what) : Error("scheduling", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace skilltrace
