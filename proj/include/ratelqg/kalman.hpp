#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ratelqg/model.hpp"

namespace ratelqg {

/// Filter covariances along the horizon. Entry i refers to 1-based stage i+1:
/// P_filt[i] is the posterior covariance at stage i+1 and P_pred[i] the prior,
/// with P_pred[0] equal to the initial state covariance. A stationary design
/// stores a single entry in each vector (the fixed-point posterior and prior).
struct CovarianceSchedule {
    std::vector<Eigen::MatrixXd> P_filt, P_pred;
};

/// Per-stage information gain P_filt^{-1} - P_pred^{-1}. Eigenvalues in
/// (-1e-8 * scale, 0) are clamped to zero; anything more negative flags an
/// inconsistent schedule and throws std::invalid_argument.
std::vector<Eigen::MatrixXd> snr_from_schedule(const CovarianceSchedule& schedule);

/// Sensor realization of one information-gain matrix: y = C x + v with
/// unit-norm rows of C (eigenvector directions) and diagonal PD V, such that
/// C^T V^{-1} C reproduces the retained spectrum of the input.
struct SensorDesign {
    Eigen::MatrixXd SNR;  // clamped input, kept for reference
    int rank = 0;
    Eigen::MatrixXd C;    // rank x n
    Eigen::MatrixXd V;    // rank x rank, diagonal
};

/// Keeps eigenvalues >= rel_threshold times the largest one; a zero matrix
/// yields rank 0 with empty C and V.
SensorDesign factor_snr(const Eigen::Ref<const Eigen::MatrixXd>& SNR,
                        double rel_threshold = 1e-3);

/// Measurement-update gain P_pred C^T (C P_pred C^T + V)^{-1}; returns an
/// n x 0 matrix for an empty sensor.
Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& P_pred,
                            const Eigen::Ref<const Eigen::MatrixXd>& C,
                            const Eigen::Ref<const Eigen::MatrixXd>& V);

/// Forward filter of a partially observed plant against its physical sensor,
/// run one stage past the horizon because the last innovation covariance
/// needs the stage T+1 update. Entry i refers to stage i+1.
struct PreKFDesign {
    std::vector<Eigen::MatrixXd> Ltilde;       // gains, stages 1..T+1
    std::vector<Eigen::MatrixXd> Ptilde_filt;  // posterior covariances, 1..T+1
    std::vector<Eigen::MatrixXd> Ptilde_pred;  // prior covariances, 1..T+1
    std::vector<Eigen::MatrixXd> Psi;          // filter-state noise, 1..T
};

PreKFDesign prekf_design(const PartiallyObservedPlant& plant);

/// Reconstructs the physical measurement y_t from consecutive filter states
/// by inverting the filter update through the gain's pseudo-inverse. Stage t
/// is 1-based; at t == 1 the prior state is zero and xtilde_prev / u_prev are
/// ignored. Throws SolverFailure if the gain loses column rank.
Eigen::VectorXd prekf_inverse(const Eigen::VectorXd& xtilde_t,
                              const Eigen::VectorXd& xtilde_prev,
                              const Eigen::VectorXd& u_prev,
                              const PreKFDesign& design,
                              const PartiallyObservedPlant& plant, int t);

/// Fully observed surrogate for a partially observed plant: the filter state
/// evolves with the same (A, B), white process noise Psi_t, and initial
/// covariance P_init - Ptilde_filt[0]. Controlling the surrogate costs
/// `cost_offset` less than the original plant; the difference is the
/// unavoidable contribution of the filtering error to the stage costs.
struct POReduction {
    TimeVaryingPlant reduced;
    double cost_offset = 0.0;
};

POReduction reduce_po_plant(const PartiallyObservedPlant& plant,
                            const PreKFDesign& design);

}  // namespace ratelqg
