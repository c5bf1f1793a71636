#include "ratelqg/riccati.hpp"

#include <cmath>

#include "ratelqg/errors.hpp"
#include "ratelqg/matrix_util.hpp"

namespace ratelqg {

namespace {

struct StageSolution {
    Eigen::MatrixXd M, K, Theta, Phi;
};

/// One backward step at value-function weight S with stage matrices (A, B, R).
StageSolution backward_step(const Eigen::MatrixXd& S, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B, const Eigen::MatrixXd& R) {
    StageSolution out;
    out.M = symmetrized(B.transpose() * S * B + R);
    Eigen::LLT<Eigen::MatrixXd> llt(out.M);
    if (llt.info() != Eigen::Success) {
        throw SolverFailure("backward recursion: input-space curvature lost "
                            "positive definiteness");
    }
    out.K = -llt.solve(B.transpose() * S * A);
    out.Theta = symmetrized(out.K.transpose() * out.M * out.K);
    out.Phi = symmetrized(A.transpose() * S * (A + B * out.K));
    return out;
}

}  // namespace

RiccatiBundle backward_riccati(const TimeVaryingPlant& plant) {
    const int T = plant.horizon;
    RiccatiBundle bundle;
    bundle.S.resize(T);
    bundle.Phi.resize(T);
    bundle.M.resize(T);
    bundle.K.resize(T);
    bundle.Theta.resize(T);

    Eigen::MatrixXd S = symmetrized(plant.Q[T - 1]);
    for (int t = T; t >= 1; --t) {
        const int i = t - 1;
        bundle.S[i] = S;
        StageSolution stage = backward_step(S, plant.A[i], plant.B[i], plant.R[i]);
        bundle.M[i] = std::move(stage.M);
        bundle.K[i] = std::move(stage.K);
        bundle.Theta[i] = std::move(stage.Theta);
        bundle.Phi[i] = std::move(stage.Phi);
        if (t > 1) {
            S = symmetrized(plant.Q[t - 2] + bundle.Phi[i]);
        }
    }
    return bundle;
}

RiccatiBundle solve_are(const StationaryPlant& plant) {
    constexpr int kMaxIter = 100000;
    constexpr double kRelTol = 1e-12;

    Eigen::MatrixXd S = symmetrized(plant.Q);
    bool converged = false;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        StageSolution stage = backward_step(S, plant.A, plant.B, plant.R);
        Eigen::MatrixXd next = symmetrized(plant.Q + stage.Phi);
        const double delta = (next - S).cwiseAbs().maxCoeff();
        S = std::move(next);
        if (delta <= kRelTol * (1.0 + S.cwiseAbs().maxCoeff())) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw SolverFailure(
            "stationary Riccati iteration did not converge; the plant is likely "
            "not stabilizable or not detectable");
    }

    StageSolution stage = backward_step(S, plant.A, plant.B, plant.R);
    if (spectral_radius(plant.A + plant.B * stage.K) >= 1.0) {
        throw SolverFailure(
            "stationary Riccati solution does not stabilize the plant");
    }
    RiccatiBundle bundle;
    bundle.S = {S};
    bundle.M = {std::move(stage.M)};
    bundle.K = {std::move(stage.K)};
    bundle.Theta = {std::move(stage.Theta)};
    bundle.Phi = {std::move(stage.Phi)};
    return bundle;
}

Eigen::MatrixXd lyapunov_stationary(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    const Eigen::Ref<const Eigen::MatrixXd>& W) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || W.rows() != n || W.cols() != n) {
        throw std::invalid_argument("lyapunov_stationary: dimension mismatch");
    }
    if (spectral_radius(A) >= 1.0) {
        throw std::invalid_argument(
            "lyapunov_stationary: A is not Schur stable, no stationary "
            "covariance exists");
    }
    // vec(A P A^T) = (A (x) A) vec(P) in column-major vectorization.
    const Eigen::Index n2 = n * n;
    Eigen::MatrixXd coeff = Eigen::MatrixXd::Identity(n2, n2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index k = 0; k < n; ++k) {
                for (Eigen::Index l = 0; l < n; ++l) {
                    coeff(i + n * j, k + n * l) -= A(i, k) * A(j, l);
                }
            }
        }
    }
    Eigen::VectorXd rhs(n2);
    for (Eigen::Index j = 0; j < n; ++j) {
        rhs.segment(j * n, n) = W.col(j);
    }
    Eigen::VectorXd sol = coeff.partialPivLu().solve(rhs);
    Eigen::MatrixXd P(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        P.col(j) = sol.segment(j * n, n);
    }
    P = symmetrized(P);
    const double residual = (P - A * P * A.transpose() - W).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-8 * (1.0 + P.cwiseAbs().maxCoeff()))) {
        throw SolverFailure("lyapunov_stationary: residual check failed");
    }
    return P;
}

}  // namespace ratelqg
