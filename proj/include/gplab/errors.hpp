#pragma once

#include <stdexcept>
#include <string>

namespace gplab {

// Malformed persisted artifact (config file, dataset, checkpoint, metrics).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent run configuration, detected before any step runs.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values produced where the contract requires finite ones.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Operation invoked against stale or mismatched cached state.
struct StateError : std::runtime_error {
    explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gplab
