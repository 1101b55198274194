#pragma once

#include <stdexcept>
#include <string>

namespace synforce {

// Invalid configuration values (window sizes, dimensions, CFL bound, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input data does not match the expected column layout.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite or otherwise unusable input values.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor dimensions disagree.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace synforce
