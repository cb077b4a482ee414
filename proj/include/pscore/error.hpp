#pragma once

#include <stdexcept>
#include <string>

namespace pscore {

// Base class for all errors raised by this library. Anything derived from
// Error is a data or usage problem the caller can report; std::logic_error
// is reserved for broken internal invariants.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file. Messages carry "path:line: what" so the CLI can
// name the first failing row.
class ParseError : public Error {
public:
    ParseError(const std::string& where, std::size_t line, const std::string& what)
        : Error(where + ":" + std::to_string(line) + ": " + what) {}
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Precondition violation on an operation (unknown feature, cap too small,
// too few samples, value out of range).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

} // namespace pscore
