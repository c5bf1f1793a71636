#pragma once

#include <stdexcept>
#include <string>

namespace ratelqg {

/// Thrown when a requested distortion budget lies at or below the smallest
/// achievable cost of the plant; `floor` carries that lower bound.
class InfeasibleBudget : public std::runtime_error {
public:
    InfeasibleBudget(const std::string& message, double floor_value)
        : std::runtime_error(message), floor(floor_value) {}

    double floor;
};

/// Thrown when an iterative numerical routine fails to converge or loses
/// positive definiteness where it is required.
class SolverFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ratelqg
