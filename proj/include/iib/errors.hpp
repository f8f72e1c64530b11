#pragma once

#include <stdexcept>
#include <string>

namespace iib {

// Thrown when an operation's preconditions are violated (bad dimensions,
// out-of-range hyperparameters, malformed files).
struct InvalidInput : std::invalid_argument {
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown when training encounters a non-finite loss or gradient. Carries the
// path of the offending parameter when known.
struct TrainingAbort : std::runtime_error {
    explicit TrainingAbort(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown by fusion-weight normalization when all evidence scores are zero.
// Callers fall back to the budget prior.
struct DegenerateEvidence : std::runtime_error {
    explicit DegenerateEvidence(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on unreadable or unparsable data/model/config files.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace iib
