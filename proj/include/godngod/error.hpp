#pragma once

#include <stdexcept>
#include <string>

namespace godngod {

/// Coarse failure classes. The CLI maps them to exit codes and the service
/// maps them to HTTP status classes.
enum class ErrorKind {
    invalid_input,   // malformed text or document, bad parameters
    validation,      // a claim did not reproduce
    not_found,
    unauthorized,
    conflict,        // illegal state transition
    io,
    server,
};

inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_input: return "invalid_input";
        case ErrorKind::validation: return "validation";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::unauthorized: return "unauthorized";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::io: return "io";
        case ErrorKind::server: return "server";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Machine text syntax error; line is 1-based.
class ParseError : public Error {
public:
    ParseError(int line, const std::string& what)
        : Error(ErrorKind::invalid_input, "line " + std::to_string(line) + ": " + what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace godngod
