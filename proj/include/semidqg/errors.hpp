#pragma once

#include <stdexcept>
#include <string>

namespace semidqg {

// Base class for all errors raised by this library.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad JSON, bad line). Message names the line number.
struct parse_error : error {
    using error::error;
};

// Structurally valid input violating a schema rule (e.g. mixed labeled /
// unlabeled corpus).
struct schema_error : error {
    using error::error;
};

// Invalid or missing configuration.
struct config_error : error {
    using error::error;
};

// A required field is absent (e.g. RA input requested without a response).
struct missing_field_error : error {
    using error::error;
};

// Bad arguments to an operation (length mismatch, empty list, ...).
struct argument_error : error {
    using error::error;
};

// Corrupt or mismatched checkpoint data.
struct integrity_error : error {
    using error::error;
};

}  // namespace semidqg
