#pragma once

#include <stdexcept>
#include <string>

namespace fluidfcfs {

// Malformed or inconsistent system description (bad JSON, invariant
// violations such as alpha not summing to 1, unknown identifiers).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Operation invoked on a system whose rate mode or graph shape does not
// support it (e.g. tree solver on a graph with a cycle).
class ModeError : public std::runtime_error {
public:
    explicit ModeError(const std::string& what) : std::runtime_error(what) {}
};

// A computation reached a state the underlying theory rules out
// (singular tree system, simplex cycling past its iteration bound, ...).
class InternalError : public std::runtime_error {
public:
    explicit InternalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace fluidfcfs
