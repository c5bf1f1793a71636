#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ratelqg/errors.hpp"
#include "ratelqg/kalman.hpp"
#include "ratelqg/matrix_util.hpp"
#include "ratelqg/maxdet.hpp"

namespace ratelqg {

namespace {

double inf_norm(const Eigen::MatrixXd& M) {
    return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

bool noise_is_singular(const Eigen::MatrixXd& W) {
    return sym_min_eigenvalue(W) < 1e-10 * std::max(1.0, inf_norm(W));
}

/// Truncated PSD factor: returns F with W ~ F F^T, keeping eigenvalues at or
/// above 1e-12 times the largest one.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& W) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(W));
    const double lam_max = std::max(0.0, es.eigenvalues().maxCoeff());
    const double cut = 1e-12 * lam_max;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = W.rows() - 1; i >= 0; --i) {
        const double lam = es.eigenvalues()(i);
        if (lam > 0.0 && lam >= cut) kept.push_back(i);
    }
    Eigen::MatrixXd F(W.rows(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t c = 0; c < kept.size(); ++c) {
        F.col(static_cast<Eigen::Index>(c)) =
            es.eigenvectors().col(kept[c]) * std::sqrt(es.eigenvalues()(kept[c]));
    }
    return F;
}

Eigen::MatrixXd step_cov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P,
                         const Eigen::MatrixXd& Wlike) {
    return symmetrized(A * P * A.transpose() + Wlike);
}

/// Half the gap between P and its one-step conditional floor:
///   Pi = (P - P A^T (A P A^T + Wlike)^{-1} A P) / 2.
/// Strictly feasible for the 2x2 block constraint whenever P and the
/// predicted covariance are positive definite.
Eigen::MatrixXd half_conditional(const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& P,
                                 const Eigen::MatrixXd& Wlike) {
    const Eigen::MatrixXd M = step_cov(A, P, Wlike);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
        throw SolverFailure("initial point: predicted covariance not positive definite");
    }
    const Eigen::MatrixXd AP = A * P;
    return 0.5 * symmetrized(P - AP.transpose() * llt.solve(AP));
}

/// Rank-deficient analogue: Delta = (I - F^T (A P A^T + F F^T)^{-1} F) / 2.
Eigen::MatrixXd half_delta(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P,
                           const Eigen::MatrixXd& F) {
    const Eigen::MatrixXd M = step_cov(A, P, F * F.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
        throw SolverFailure("initial point: predicted covariance not positive definite");
    }
    const Eigen::Index k = F.cols();
    return 0.5 * symmetrized(Eigen::MatrixXd::Identity(k, k) -
                             F.transpose() * llt.solve(F));
}

/// Evaluates every constraint and objective expression at the candidate
/// point; used as a belt-and-braces check before installing an analytic
/// initial point (the solver falls back to its own phase when absent).
bool point_is_strictly_feasible(const MaxDetProblem& prob,
                                const std::vector<Eigen::MatrixXd>& values) {
    for (const auto& c : prob.constraints) {
        const Eigen::MatrixXd val = c.evaluate(values);
        if (c.dim == 1) {
            if (!(val(0, 0) > 0.0)) return false;
        } else if (!is_positive_definite(val)) {
            return false;
        }
    }
    for (const auto& term : prob.objective) {
        if (!is_positive_definite(term.expr.evaluate(values))) return false;
    }
    return true;
}

std::string stage_name(const char* base, int t) {
    std::ostringstream os;
    os << base << t;
    return os.str();
}

}  // namespace

bool needs_singular_form(const std::vector<Eigen::MatrixXd>& W) {
    for (const auto& block : W) {
        if (noise_is_singular(block)) return true;
    }
    return false;
}

MaxDetProblem build_tv_problem(const TimeVaryingPlant& plant,
                               const RiccatiBundle& bundle, double D) {
    const int T = plant.horizon;
    const Eigen::Index n = plant.state_dim();
    for (int t = 1; t <= T; ++t) {
        if (noise_is_singular(plant.W[t - 1])) {
            std::ostringstream os;
            os << "build_tv_problem: W (stage " << t
               << ") is rank deficient; use build_tv_singular_problem";
            throw std::invalid_argument(os.str());
        }
    }

    MaxDetProblem prob;
    for (int t = 1; t <= T; ++t) {
        prob.variables.push_back({stage_name("P", t), static_cast<int>(n)});
    }
    for (int t = 1; t < T; ++t) {
        prob.variables.push_back({stage_name("Pi", t), static_cast<int>(n)});
    }
    const auto P = [](int t) { return t - 1; };
    const auto Pi = [T](int t) { return T + t - 1; };
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    // Objective: sum of half log-determinants of the conditional
    // covariances; the telescoped prior terms land in the constant offset.
    double c1 = 0.5 * logdet_pd(plant.P_init);
    for (int t = 1; t < T; ++t) c1 += 0.5 * logdet_pd(plant.W[t - 1]);
    prob.constant_offset = c1;
    for (int t = 1; t < T; ++t) {
        LogDetTerm term;
        term.weight = 0.5;
        term.expr.dim = static_cast<int>(n);
        term.expr.constant = Eigen::MatrixXd::Zero(n, n);
        term.expr.congruences.push_back({Pi(t), 1.0, I});
        prob.objective.push_back(std::move(term));
    }
    {
        LogDetTerm term;  // the final stage needs no separate variable
        term.weight = 0.5;
        term.expr.dim = static_cast<int>(n);
        term.expr.constant = Eigen::MatrixXd::Zero(n, n);
        term.expr.congruences.push_back({P(T), 1.0, I});
        prob.objective.push_back(std::move(term));
    }

    // Control-cost budget.
    double c2 = (bundle.Phi[0] * plant.P_init).trace();
    for (int t = 1; t <= T; ++t) c2 += (plant.W[t - 1] * bundle.S[t - 1]).trace();
    prob.budget_floor = c2;
    prob.known_infeasible = !(D > c2);
    {
        AffineExpr budget;
        budget.dim = 1;
        budget.constant = Eigen::MatrixXd::Constant(1, 1, D - c2);
        for (int t = 1; t <= T; ++t) {
            budget.traces.push_back({P(t), -bundle.Theta[t - 1]});
        }
        prob.constraints.push_back(std::move(budget));
    }

    // Initial-stage dominance: P_1 below the prior covariance.
    {
        AffineExpr e;
        e.dim = static_cast<int>(n);
        e.constant = symmetrized(plant.P_init);
        e.congruences.push_back({P(1), -1.0, I});
        prob.constraints.push_back(std::move(e));
    }

    for (int t = 1; t < T; ++t) {
        const Eigen::MatrixXd& A = plant.A[t - 1];
        const Eigen::MatrixXd& W = plant.W[t - 1];
        {
            AffineExpr pred;  // P_{t+1} below the one-step prediction
            pred.dim = static_cast<int>(n);
            pred.constant = symmetrized(W);
            pred.congruences.push_back({P(t), 1.0, A});
            pred.congruences.push_back({P(t + 1), -1.0, I});
            prob.constraints.push_back(std::move(pred));
        }
        {
            AffineExpr lmi;  // couples Pi_t to P_t through the 2x2 block form
            lmi.dim = static_cast<int>(2 * n);
            lmi.constant = Eigen::MatrixXd::Zero(2 * n, 2 * n);
            lmi.constant.bottomRightCorner(n, n) = symmetrized(W);
            Eigen::MatrixXd J(2 * n, n);
            J.topRows(n) = I;
            J.bottomRows(n) = A;
            lmi.congruences.push_back({P(t), 1.0, J});
            Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * n, n);
            E.topRows(n) = I;
            lmi.congruences.push_back({Pi(t), -1.0, E});
            prob.constraints.push_back(std::move(lmi));
        }
    }

    if (prob.known_infeasible) return prob;

    // Analytic initial point: half the free-evolution covariance schedule,
    // shrunk geometrically until the budget row has ten percent slack.
    std::vector<Eigen::MatrixXd> Pb(T);
    Pb[0] = 0.5 * symmetrized(plant.P_init);
    for (int t = 1; t < T; ++t) {
        Pb[t] = 0.5 * step_cov(plant.A[t - 1], Pb[t - 1], plant.W[t - 1]);
    }
    double used = 0.0;
    for (int t = 1; t <= T; ++t) used += (bundle.Theta[t - 1] * Pb[t - 1]).trace();
    double sigma = 1.0;
    const double slack_target = 0.9 * (D - c2);
    for (int iter = 0; iter < 4000 && sigma * used > slack_target; ++iter) {
        sigma *= 0.5;
    }
    std::vector<Eigen::MatrixXd> init(prob.variables.size());
    for (int t = 1; t <= T; ++t) init[P(t)] = sigma * Pb[t - 1];
    for (int t = 1; t < T; ++t) {
        init[Pi(t)] = half_conditional(plant.A[t - 1], init[P(t)], plant.W[t - 1]);
    }
    if (point_is_strictly_feasible(prob, init)) {
        prob.initial_point = std::move(init);
    }
    return prob;
}

MaxDetProblem build_tv_singular_problem(const TimeVaryingPlant& plant,
                                        const RiccatiBundle& bundle, double D) {
    const int T = plant.horizon;
    const Eigen::Index n = plant.state_dim();
    if (!is_positive_definite(symmetrized(plant.P_init))) {
        throw std::invalid_argument(
            "build_tv_singular_problem: P_init must be positive definite");
    }
    for (int t = 1; t < T; ++t) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(plant.A[t - 1]);
        const double smax = svd.singularValues().size() > 0
                                ? svd.singularValues()(0)
                                : 0.0;
        const double smin = svd.singularValues().size() > 0
                                ? svd.singularValues()(svd.singularValues().size() - 1)
                                : 0.0;
        if (!(smin > 1e-12 * std::max(1.0, smax))) {
            std::ostringstream os;
            os << "build_tv_singular_problem: A (stage " << t
               << ") must be nonsingular for the rank-deficient noise variant";
            throw std::invalid_argument(os.str());
        }
    }

    std::vector<Eigen::MatrixXd> F(T);
    for (int t = 1; t <= T; ++t) F[t - 1] = psd_factor(plant.W[t - 1]);

    MaxDetProblem prob;
    for (int t = 1; t <= T; ++t) {
        prob.variables.push_back({stage_name("P", t), static_cast<int>(n)});
    }
    std::vector<int> delta_var(std::max(T - 1, 0), -1);
    for (int t = 1; t < T; ++t) {
        const int k = static_cast<int>(F[t - 1].cols());
        if (k > 0) {
            delta_var[t - 1] = static_cast<int>(prob.variables.size());
            prob.variables.push_back({stage_name("Delta", t), k});
        }
    }
    const auto P = [](int t) { return t - 1; };
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    double c1 = 0.5 * logdet_pd(plant.P_init);
    for (int t = 1; t < T; ++t) c1 += log_abs_det(plant.A[t - 1]);
    prob.constant_offset = c1;
    for (int t = 1; t < T; ++t) {
        if (delta_var[t - 1] < 0) continue;
        const int k = static_cast<int>(F[t - 1].cols());
        LogDetTerm term;
        term.weight = 0.5;
        term.expr.dim = k;
        term.expr.constant = Eigen::MatrixXd::Zero(k, k);
        term.expr.congruences.push_back(
            {delta_var[t - 1], 1.0, Eigen::MatrixXd::Identity(k, k)});
        prob.objective.push_back(std::move(term));
    }
    {
        LogDetTerm term;
        term.weight = 0.5;
        term.expr.dim = static_cast<int>(n);
        term.expr.constant = Eigen::MatrixXd::Zero(n, n);
        term.expr.congruences.push_back({P(T), 1.0, I});
        prob.objective.push_back(std::move(term));
    }

    double c2 = (bundle.Phi[0] * plant.P_init).trace();
    for (int t = 1; t <= T; ++t) {
        c2 += (F[t - 1].transpose() * bundle.S[t - 1] * F[t - 1]).trace();
    }
    prob.budget_floor = c2;
    prob.known_infeasible = !(D > c2);
    {
        AffineExpr budget;
        budget.dim = 1;
        budget.constant = Eigen::MatrixXd::Constant(1, 1, D - c2);
        for (int t = 1; t <= T; ++t) {
            budget.traces.push_back({P(t), -bundle.Theta[t - 1]});
        }
        prob.constraints.push_back(std::move(budget));
    }
    {
        AffineExpr e;
        e.dim = static_cast<int>(n);
        e.constant = symmetrized(plant.P_init);
        e.congruences.push_back({P(1), -1.0, I});
        prob.constraints.push_back(std::move(e));
    }
    for (int t = 1; t < T; ++t) {
        const Eigen::MatrixXd& A = plant.A[t - 1];
        const Eigen::MatrixXd FFt = F[t - 1] * F[t - 1].transpose();
        {
            AffineExpr pred;
            pred.dim = static_cast<int>(n);
            pred.constant = symmetrized(FFt);
            pred.congruences.push_back({P(t), 1.0, A});
            pred.congruences.push_back({P(t + 1), -1.0, I});
            prob.constraints.push_back(std::move(pred));
        }
        if (delta_var[t - 1] < 0) continue;
        const int k = static_cast<int>(F[t - 1].cols());
        AffineExpr lmi;
        lmi.dim = static_cast<int>(k + n);
        lmi.constant = Eigen::MatrixXd::Zero(k + n, k + n);
        lmi.constant.topLeftCorner(k, k) = Eigen::MatrixXd::Identity(k, k);
        lmi.constant.topRightCorner(k, n) = F[t - 1].transpose();
        lmi.constant.bottomLeftCorner(n, k) = F[t - 1];
        lmi.constant.bottomRightCorner(n, n) = symmetrized(FFt);
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k + n, n);
        J.bottomRows(n) = A;
        lmi.congruences.push_back({P(t), 1.0, J});
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(k + n, k);
        E.topRows(k) = Eigen::MatrixXd::Identity(k, k);
        lmi.congruences.push_back({delta_var[t - 1], -1.0, E});
        prob.constraints.push_back(std::move(lmi));
    }

    if (prob.known_infeasible) return prob;

    std::vector<Eigen::MatrixXd> Pb(T);
    Pb[0] = 0.5 * symmetrized(plant.P_init);
    for (int t = 1; t < T; ++t) {
        Pb[t] = 0.5 * step_cov(plant.A[t - 1], Pb[t - 1],
                               F[t - 1] * F[t - 1].transpose());
    }
    double used = 0.0;
    for (int t = 1; t <= T; ++t) used += (bundle.Theta[t - 1] * Pb[t - 1]).trace();
    double sigma = 1.0;
    const double slack_target = 0.9 * (D - c2);
    for (int iter = 0; iter < 4000 && sigma * used > slack_target; ++iter) {
        sigma *= 0.5;
    }
    std::vector<Eigen::MatrixXd> init(prob.variables.size());
    for (int t = 1; t <= T; ++t) init[P(t)] = sigma * Pb[t - 1];
    for (int t = 1; t < T; ++t) {
        if (delta_var[t - 1] < 0) continue;
        init[delta_var[t - 1]] =
            half_delta(plant.A[t - 1], init[P(t)], F[t - 1]);
    }
    if (point_is_strictly_feasible(prob, init)) {
        prob.initial_point = std::move(init);
    }
    return prob;
}

MaxDetProblem build_stationary_problem(const StationaryPlant& plant,
                                       const RiccatiBundle& bundle, double D) {
    const Eigen::Index n = plant.A.rows();
    if (noise_is_singular(plant.W)) {
        throw std::invalid_argument(
            "build_stationary_problem: W must be positive definite");
    }
    MaxDetProblem prob;
    prob.variables.push_back({"P", static_cast<int>(n)});
    prob.variables.push_back({"Pi", static_cast<int>(n)});
    const int vP = 0;
    const int vPi = 1;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    prob.constant_offset = 0.5 * logdet_pd(plant.W);
    {
        LogDetTerm term;
        term.weight = 0.5;
        term.expr.dim = static_cast<int>(n);
        term.expr.constant = Eigen::MatrixXd::Zero(n, n);
        term.expr.congruences.push_back({vPi, 1.0, I});
        prob.objective.push_back(std::move(term));
    }

    const double floor = (plant.W * bundle.S[0]).trace();
    prob.budget_floor = floor;
    prob.known_infeasible = !(D > floor);
    {
        AffineExpr budget;
        budget.dim = 1;
        budget.constant = Eigen::MatrixXd::Constant(1, 1, D - floor);
        budget.traces.push_back({vP, -bundle.Theta[0]});
        prob.constraints.push_back(std::move(budget));
    }
    {
        AffineExpr pred;  // stationarity: P below its own one-step prediction
        pred.dim = static_cast<int>(n);
        pred.constant = symmetrized(plant.W);
        pred.congruences.push_back({vP, 1.0, plant.A});
        pred.congruences.push_back({vP, -1.0, I});
        prob.constraints.push_back(std::move(pred));
    }
    {
        AffineExpr lmi;
        lmi.dim = static_cast<int>(2 * n);
        lmi.constant = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        lmi.constant.bottomRightCorner(n, n) = symmetrized(plant.W);
        Eigen::MatrixXd J(2 * n, n);
        J.topRows(n) = I;
        J.bottomRows(n) = plant.A;
        lmi.congruences.push_back({vP, 1.0, J});
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * n, n);
        E.topRows(n) = I;
        lmi.congruences.push_back({vPi, -1.0, E});
        prob.constraints.push_back(std::move(lmi));
    }
    {
        // Cap keeps the barrier problem bounded when the budget row leaves a
        // flat direction (for example when Theta is rank deficient); the bias
        // on the optimal value is of order 1/radius.
        const double radius = 1e5 * std::max(1.0, inf_norm(plant.W));
        AffineExpr cap;
        cap.dim = static_cast<int>(n);
        cap.constant = radius * I;
        cap.congruences.push_back({vP, -1.0, I});
        prob.constraints.push_back(std::move(cap));
    }

    if (prob.known_infeasible) return prob;

    const double theta_tr = bundle.Theta[0].trace();
    double eps = 0.5 * sym_min_eigenvalue(plant.W);
    if (theta_tr > 0.0) {
        eps = std::min(eps, 0.45 * (D - floor) / theta_tr);
    }
    std::vector<Eigen::MatrixXd> init(2);
    for (int iter = 0; iter < 4000; ++iter) {
        init[vP] = eps * I;
        init[vPi] = half_conditional(plant.A, init[vP], plant.W);
        if (point_is_strictly_feasible(prob, init)) break;
        eps *= 0.5;
    }
    if (point_is_strictly_feasible(prob, init)) {
        prob.initial_point = std::move(init);
    }
    return prob;
}

MaxDetProblem build_vstar_problem(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                  const Eigen::Ref<const Eigen::MatrixXd>& W) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || W.rows() != n || W.cols() != n) {
        throw std::invalid_argument("build_vstar_problem: dimension mismatch");
    }
    if (noise_is_singular(W)) {
        throw std::invalid_argument(
            "build_vstar_problem: W must be positive definite");
    }
    MaxDetProblem prob;
    prob.variables.push_back({"P", static_cast<int>(n)});
    prob.variables.push_back({"Pi", static_cast<int>(n)});
    const int vP = 0;
    const int vPi = 1;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    // Scaling W and the variables jointly shifts both log-det terms by the
    // same amount, so the optimal value is invariant.  Normalizing keeps the
    // cap radius and the barrier conditioning independent of the noise scale.
    const Eigen::MatrixXd Wn = symmetrized(W) / std::max(1e-300, inf_norm(W));

    prob.constant_offset = 0.5 * logdet_pd(Wn);
    {
        LogDetTerm term;
        term.weight = 0.5;
        term.expr.dim = static_cast<int>(n);
        term.expr.constant = Eigen::MatrixXd::Zero(n, n);
        term.expr.congruences.push_back({vPi, 1.0, I});
        prob.objective.push_back(std::move(term));
    }
    {
        AffineExpr pred;
        pred.dim = static_cast<int>(n);
        pred.constant = Wn;
        pred.congruences.push_back({vP, 1.0, Eigen::MatrixXd(A)});
        pred.congruences.push_back({vP, -1.0, I});
        prob.constraints.push_back(std::move(pred));
    }
    {
        AffineExpr lmi;
        lmi.dim = static_cast<int>(2 * n);
        lmi.constant = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        lmi.constant.bottomRightCorner(n, n) = Wn;
        Eigen::MatrixXd J(2 * n, n);
        J.topRows(n) = I;
        J.bottomRows(n) = A;
        lmi.congruences.push_back({vP, 1.0, J});
        Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * n, n);
        E.topRows(n) = I;
        lmi.congruences.push_back({vPi, -1.0, E});
        prob.constraints.push_back(std::move(lmi));
    }
    {
        // Without a budget row the feasible set is unbounded; the cap keeps
        // the centering subproblems well posed (bias of order 1/radius).
        const double radius = 1e5;
        AffineExpr cap;
        cap.dim = static_cast<int>(n);
        cap.constant = radius * I;
        cap.congruences.push_back({vP, -1.0, I});
        prob.constraints.push_back(std::move(cap));
    }

    const double eps = 0.5 * sym_min_eigenvalue(Wn);
    std::vector<Eigen::MatrixXd> init(2);
    init[vP] = eps * I;
    init[vPi] = half_conditional(A, init[vP], Wn);
    if (point_is_strictly_feasible(prob, init)) {
        prob.initial_point = std::move(init);
    }
    return prob;
}

MaxDetProblem build_po_problem(const PartiallyObservedPlant& plant,
                               const RiccatiBundle& bundle,
                               const PreKFDesign& prekf, double D) {
    POReduction red = reduce_po_plant(plant, prekf);
    if (!is_positive_definite(symmetrized(red.reduced.P_init))) {
        throw std::invalid_argument(
            "build_po_problem: the reduced initial covariance is singular "
            "(observation dimension below the state dimension is not supported)");
    }
    bool singular = false;
    for (const auto& Psi : red.reduced.W) {
        if (noise_is_singular(Psi)) {
            singular = true;
            break;
        }
    }
    const double D_reduced = D - red.cost_offset;
    MaxDetProblem prob = singular
                             ? build_tv_singular_problem(red.reduced, bundle,
                                                         D_reduced)
                             : build_tv_problem(red.reduced, bundle, D_reduced);
    prob.budget_floor += red.cost_offset;
    return prob;
}

}  // namespace ratelqg
