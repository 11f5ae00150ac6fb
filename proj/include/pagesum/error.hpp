#pragma once

#include <stdexcept>
#include <string>

namespace pagesum {

// Bad caller input: shape mismatches, out-of-range indices, missing fields.
// Maps to exit code 1 at the CLI.
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files: corrupt checkpoints, unparseable corpus lines. Exit code 1.
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure: NaN/Inf escaping an operation, non-finite loss. Exit code 2.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A query row whose mask admits no key at all.
struct degenerate_mask_error : input_error {
    explicit degenerate_mask_error(const std::string& msg) : input_error(msg) {}
};

}  // namespace pagesum
