#pragma once

#include <stdexcept>
#include <string>

namespace carve {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input outside the domain of an operation (non-finite argument, bad probability, size mismatch).
class DomainError : public Error {
public:
    using Error::Error;
};

// Iterative routine stopped before meeting its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_estimate, double gap)
        : Error(what), last_estimate_(last_estimate), gap_(gap) {}

    double last_estimate() const noexcept { return last_estimate_; }
    double gap() const noexcept { return gap_; }

private:
    double last_estimate_;
    double gap_;
};

// Linear-algebra failure (non-PD matrix, failed factorization).
class NumericError : public Error {
public:
    using Error::Error;
};

// Selection probability below the representable range; the conditional law cannot be normalized.
class RareEventUnderflow : public Error {
public:
    using Error::Error;
};

// Confidence-interval root bracketing failed.
class InversionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

// A hard mathematical invariant was observed to fail.
class InvariantFailure : public Error {
public:
    using Error::Error;
};

}  // namespace carve
