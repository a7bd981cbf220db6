#pragma once
// Error taxonomy.  Validation failures throw; expected outcomes (e.g. a trace
// rejected by cleaning) are ordinary return values, never exceptions.

#include <stdexcept>
#include <string>

namespace wf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input text (trace files, manifests, CSV).
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid input that violates a precondition (wrong length,
// odd class count for pairing, empty dataset, ...).
struct DataError : Error {
    using Error::Error;
};

// Bad configuration values or unknown keys.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem and serialization failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace wf
