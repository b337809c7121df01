#pragma once

#include <stdexcept>
#include <string>

namespace eotlab {

/// Precondition violated by an argument (radius, point, grid geometry).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Inputs that cannot be combined, e.g. marginals of different mass.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A scaling left the configured admissibility windows.
class AdmissibilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A transform produced an object that violates its own invariants.
class ConsistencyError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Smallness hypothesis of an improvement step does not hold.
class SmallnessError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Malformed configuration or file.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace eotlab
