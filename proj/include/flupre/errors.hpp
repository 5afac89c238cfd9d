#pragma once

#include <stdexcept>
#include <string>

namespace flupre {

// Common base so CLI / harness code can catch everything from this library
// with one handler.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or inconsistent user-supplied configuration (bad field values,
// unknown config keys, mismatched sweep setups).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Structurally invalid data: corpus records violating invariants, parameter
// name/shape mismatches against a checkpoint, model/input dimension clashes.
struct SchemaError : Error {
    explicit SchemaError(const std::string& msg) : Error("schema error: " + msg) {}
};

// Unreadable on-disk input (malformed line, truncated binary record).
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

// Argument outside its mathematical domain (target class out of range,
// empty sequence where one element is required, zero-variance correlation).
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error("domain error: " + msg) {}
};

// Tensor shape mismatch in a numeric op; message names both shapes.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// Position outside a sequence.
struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error("index error: " + msg) {}
};

// Non-finite value where a finite one is required (NaN loss, divergent run).
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

} // namespace flupre
