#pragma once

#include <stdexcept>
#include <string>

namespace dcedseg {

// Dimension or layout mismatch (tensor shapes, mask sizes, channel counts).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad argument value: out-of-range label id, malformed mask, invalid option.
struct ValueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration document.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation invoked in a state that cannot support it (e.g. missing grad buffer).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

// Metric requested on a degenerate input (no truth pixels, empty union).
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File I/O failure; message carries the offending path.
struct IoError : std::runtime_error {
    IoError(const std::string& what, const std::string& path)
        : std::runtime_error(what + ": " + path) {}
};

}  // namespace dcedseg
