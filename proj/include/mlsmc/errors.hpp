#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mlsmc {

/// Invalid configuration or parameter value. `field()` names the offending entry.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Numerical failure at a given time step: simulation blow-up, particle filter
/// divergence (all weights zero) or loss of positive definiteness.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& message, std::size_t step)
        : std::runtime_error(message + " at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace mlsmc
