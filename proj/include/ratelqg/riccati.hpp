#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ratelqg/model.hpp"

namespace ratelqg {

/// Certainty-equivalence control quantities, one entry per stage:
///   S      value-function weights (cost-to-go on the current state),
///   Phi    S propagated through one transition (Phi[t] pairs with stage t+1's
///          role as initial weight; Phi[0] multiplies the initial covariance
///          in cost accounting),
///   M      input-space curvature B^T S B + R,
///   K      optimal feedback gains u_t = K_t xhat_t,
///   Theta  K^T M K, the weight that prices estimation error in the cost.
/// A stationary solve stores a single entry in each vector.
struct RiccatiBundle {
    std::vector<Eigen::MatrixXd> S, Phi, M, K, Theta;
};

/// Backward recursion over the full horizon of a validated plant.
RiccatiBundle backward_riccati(const TimeVaryingPlant& plant);

/// Fixed-point solve of the stationary Riccati equation by iterating the
/// backward recursion to convergence (relative tolerance 1e-12). Throws
/// SolverFailure when the iteration does not settle, which in practice flags
/// an unstabilizable or undetectable pair that slipped past validation.
RiccatiBundle solve_are(const StationaryPlant& plant);

/// Solves P = A P A^T + W for Schur-stable A via Kronecker vectorization.
/// Throws std::invalid_argument when the spectral radius of A is >= 1.
Eigen::MatrixXd lyapunov_stationary(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    const Eigen::Ref<const Eigen::MatrixXd>& W);

}  // namespace ratelqg
