#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace ratelqg {

// ============================================================================
// Plant descriptions
// ============================================================================

/// Finite-horizon linear-Gaussian plant
///   x_{t+1} = A_t x_t + B_t u_t + w_t,   w_t ~ N(0, W_t),   x_1 ~ N(0, P_init)
/// with stage weights Q_t (state, applied to x_{t+1}) and R_t (input).
/// All per-stage arrays have length `horizon`.
struct TimeVaryingPlant {
    int horizon = 0;
    std::vector<Eigen::MatrixXd> A, B, W, Q, R;
    Eigen::MatrixXd P_init;

    int state_dim() const { return A.empty() ? 0 : static_cast<int>(A[0].rows()); }
    int input_dim() const { return B.empty() ? 0 : static_cast<int>(B[0].cols()); }
};

/// Infinite-horizon time-invariant plant with per-stage average cost.
struct StationaryPlant {
    Eigen::MatrixXd A, B, W, Q, R;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }
};

/// Finite-horizon plant observed through a fixed physical sensor
///   y_t = H_t x_t + g_t,   g_t ~ N(0, G_t).
/// H/G may carry `horizon` or `horizon + 1` entries; the final entry is reused
/// for stage horizon + 1, where the forward filter needs one extra update.
struct PartiallyObservedPlant {
    TimeVaryingPlant base;
    std::vector<Eigen::MatrixXd> H, G;

    int state_dim() const { return base.state_dim(); }
    int input_dim() const { return base.input_dim(); }
    int output_dim() const { return H.empty() ? 0 : static_cast<int>(H[0].rows()); }

    /// Observation matrix used at 1-based stage t, with end-of-horizon reuse.
    const Eigen::MatrixXd& H_at(int t) const;
    const Eigen::MatrixXd& G_at(int t) const;
};

using PlantModel = std::variant<StationaryPlant, TimeVaryingPlant, PartiallyObservedPlant>;

/// Distortion budget for a synthesis call: total cost for finite-horizon
/// plants, per-stage average cost for stationary plants.
struct BudgetSpec {
    double D = 0.0;
};

// ============================================================================
// Validation
// ============================================================================

/// Outcome of plant validation. Near-symmetric weight/covariance inputs
/// (relative skew below 1e-9) are symmetrized in place and flagged.
struct ValidationReport {
    std::vector<std::string> issues;
    bool symmetrized = false;

    bool ok() const { return issues.empty(); }
    std::string joined() const;
};

/// Checks dimensions, symmetry, W/Q PSD, R/P_init PD. Mutates the plant only
/// to symmetrize near-symmetric matrices.
ValidationReport validate_tv_plant(TimeVaryingPlant& plant);

/// Stationary checks: the time-varying ones plus (A, B) stabilizable and
/// (A, Q^{1/2}) detectable, both via eigenvector rank tests.
ValidationReport validate_stationary(StationaryPlant& plant);

/// Partially observed checks: the time-varying ones plus W_t strictly PD,
/// H_t full row rank, G_t PSD, and H/G array lengths of horizon or horizon+1.
ValidationReport validate_po_plant(PartiallyObservedPlant& plant);

// ============================================================================
// Serialization (JSON)
// ============================================================================

/// Parses a plant from JSON text and validates it. Throws
/// std::invalid_argument on parse errors, schema violations, or validation
/// failures.
PlantModel parse_plant(const std::string& text);

/// Reads and parses a plant file.
PlantModel load_plant(const std::filesystem::path& path);

/// Serializes a plant to JSON. Numeric values round-trip exactly:
/// load_plant(serialize_plant(p)) reproduces p bit for bit.
std::string serialize_plant(const PlantModel& plant);

void save_plant(const PlantModel& plant, const std::filesystem::path& path);

}  // namespace ratelqg
