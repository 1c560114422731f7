#ifndef VEIL_ERRORS_HPP
#define VEIL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace veil {

// Invalid argument values (out-of-range parameters, malformed inputs).
struct DomainError : std::invalid_argument {
    explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A caller or adapter broke an API contract (shape mismatch, bad step index).
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// No pool member satisfies the swap distance constraint.
struct NoCandidateError : std::runtime_error {
    explicit NoCandidateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Evaluation protocol misuse (missing gallery id, single-class AUC input).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration file or flag combination.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and serialization failures.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace veil

#endif  // VEIL_ERRORS_HPP
