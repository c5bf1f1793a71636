#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "ratelqg/kalman.hpp"
#include "ratelqg/model.hpp"
#include "ratelqg/riccati.hpp"

namespace ratelqg {

// ============================================================================
// Problem description
// ============================================================================

/// Symmetric matrix decision variable.
struct SymmetricVariable {
    std::string name;
    int dim = 0;
};

/// Adds sign * J * X_var * J^T to an affine expression.
struct CongruenceTerm {
    int var = -1;
    double sign = 1.0;
    Eigen::MatrixXd J;
};

/// Adds Tr(C * X_var) to a 1x1 affine expression.
struct TraceTerm {
    int var = -1;
    Eigen::MatrixXd C;
};

/// Adds coeff * x * I to an affine expression, where x is a 1x1 variable
/// (used for slack variables in feasibility phases).
struct IdentityTerm {
    int var = -1;
    double coeff = 1.0;
};

/// Affine symmetric-matrix-valued function of the problem variables.
struct AffineExpr {
    int dim = 0;
    Eigen::MatrixXd constant;  // dim x dim, symmetric
    std::vector<CongruenceTerm> congruences;
    std::vector<TraceTerm> traces;  // only meaningful when dim == 1
    std::vector<IdentityTerm> identities;

    Eigen::MatrixXd evaluate(const std::vector<Eigen::MatrixXd>& values) const;
};

/// Objective contribution -weight * logdet(expr); expr must stay positive
/// definite over the search, which the solver enforces through its line
/// search.
struct LogDetTerm {
    AffineExpr expr;
    double weight = 1.0;
};

/// minimize  linear_cost . svec(x) + sum_j (-weight_j logdet G_j(x))
///           + constant_offset
/// subject to  F_k(x) >= 0  (semidefinite order) for every constraint.
///
/// svec stacks each variable's upper triangle column by column with
/// off-diagonal entries scaled by sqrt(2), so that inner products of svec
/// vectors equal Frobenius inner products.
struct MaxDetProblem {
    std::vector<SymmetricVariable> variables;
    Eigen::VectorXd linear_cost;  // empty means zero
    std::vector<LogDetTerm> objective;
    std::vector<AffineExpr> constraints;
    double constant_offset = 0.0;

    // Metadata attached by the builders.
    double budget_floor = std::numeric_limits<double>::quiet_NaN();
    bool known_infeasible = false;
    std::vector<Eigen::MatrixXd> initial_point;  // strictly feasible when given
};

// ============================================================================
// Solver
// ============================================================================

enum class SolveStatus { optimal, infeasible, numerical_failure };

struct MaxDetSolution {
    std::vector<Eigen::MatrixXd> values;
    double objective_nats = std::numeric_limits<double>::quiet_NaN();
    SolveStatus status = SolveStatus::numerical_failure;
    int iterations = 0;           // total Newton iterations across all centers
    double gap_estimate = std::numeric_limits<double>::quiet_NaN();
    double min_constraint_eig = std::numeric_limits<double>::quiet_NaN();
    bool certificate_ok = false;  // every LMI margin >= -1e-9 * (1 + scale)
    double infeasibility = std::numeric_limits<double>::quiet_NaN();
    std::string message;
};

struct SolverSettings {
    double tolerance = 1e-7;        // target duality-gap bound on the objective
    double barrier_growth = 10.0;   // multiplier on the path parameter
    int max_newton_per_center = 300;
    double backtrack = 0.5;         // line-search shrink factor
    double armijo = 0.01;           // sufficient-decrease fraction
    double phase1_margin = 1e-6;    // slack deciding feasible vs infeasible
};

/// Path-following barrier solver with damped Newton centering. Uses the
/// builder-provided initial point when it is strictly feasible, otherwise
/// runs a slack-minimizing feasibility phase first.
MaxDetSolution solve(const MaxDetProblem& problem, const SolverSettings& settings = {});

// ============================================================================
// Problem builders
// ============================================================================

/// Finite-horizon rate-distortion program over filter covariances P_1..P_T
/// and auxiliary blocks Pi_1..Pi_{T-1} (the final stage's auxiliary block is
/// eliminated by substitution). Requires every W_t nonsingular; throws
/// std::invalid_argument directing callers to the singular variant otherwise.
/// Budget floor and an analytic strictly feasible start are attached.
MaxDetProblem build_tv_problem(const TimeVaryingPlant& plant,
                               const RiccatiBundle& bundle, double D);

/// True when some covariance in the list is rank deficient under the
/// builders' threshold, i.e. when build_tv_problem would refuse the plant and
/// the factored variant applies.
bool needs_singular_form(const std::vector<Eigen::MatrixXd>& W);

/// Variant for rank-deficient process noise: W_t is factored as F_t F_t^T
/// (eigenvalues below 1e-12 relative are dropped) and the auxiliary blocks
/// shrink to the noise rank. Requires A_1..A_{T-1} nonsingular and P_init
/// positive definite.
MaxDetProblem build_tv_singular_problem(const TimeVaryingPlant& plant,
                                        const RiccatiBundle& bundle, double D);

/// Per-stage average version over a single pair (P, Pi) with budget row
/// Tr(Theta P) + Tr(W S) <= D. Requires nonsingular W.
MaxDetProblem build_stationary_problem(const StationaryPlant& plant,
                                       const RiccatiBundle& bundle, double D);

/// Same feasible set as the stationary problem with the budget row removed;
/// its optimal value is the data-rate floor of the pair (A, W). A large cap
/// P <= radius * I keeps the search region bounded; it biases the value by
/// O(1/radius), far below the solver tolerance.
MaxDetProblem build_vstar_problem(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                  const Eigen::Ref<const Eigen::MatrixXd>& W);

/// Reduces the partially observed plant through its forward filter and builds
/// the fully observed program on the surrogate (budget shifted by the
/// reduction's cost offset; noise blocks are the innovation covariances).
/// Routes to the singular variant when any innovation covariance is
/// rank-deficient.
MaxDetProblem build_po_problem(const PartiallyObservedPlant& plant,
                               const RiccatiBundle& bundle,
                               const PreKFDesign& prekf, double D);

}  // namespace ratelqg
