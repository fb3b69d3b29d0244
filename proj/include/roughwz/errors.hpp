#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roughwz {

// Bad input or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A coarse grid that is not a subset of the fine grid.
class RefinementError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Numerical failure (non-PSD covariance, integration failure). Exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrationError : public NumericalError {
public:
    IntegrationError(std::size_t segment, const std::string& what)
        : NumericalError(what + " (segment " + std::to_string(segment) + ")"), segment_(segment) {}

    std::size_t segment() const noexcept { return segment_; }

private:
    std::size_t segment_;
};

// A study that could not resolve what it was asked to measure. Exit code 4.
class InconclusiveError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace roughwz
