#pragma once

#include <stdexcept>
#include <string>

namespace feddah {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or key mismatch between arrays / parameter sets.
struct DimensionError : Error {
    using Error::Error;
};

// A precondition of an operation was violated.
struct ContractError : Error {
    using Error::Error;
};

// Duplicate task registration.
struct RegistrationError : Error {
    using Error::Error;
};

// Task identity not present in the registry.
struct TaskLookupError : Error {
    using Error::Error;
};

// Invalid or unknown configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Synthetic data could not be generated (e.g. placement failure).
struct GenerationError : Error {
    using Error::Error;
};

}  // namespace feddah
