#pragma once

#include <stdexcept>
#include <string>

namespace lcr {

// Error categories used across the library. The CLI maps each category to a
// distinct nonzero exit code.
struct Error : std::runtime_error {
    Error(std::string category, const std::string& msg)
        : std::runtime_error(category + ": " + msg), category(std::move(category)) {}
    std::string category;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};

struct MaskError : Error {
    explicit MaskError(const std::string& msg) : Error("mask", msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric", msg) {}
};

struct StateError : Error {
    explicit StateError(const std::string& msg) : Error("state", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

}  // namespace lcr
