#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "ratelqg/errors.hpp"
#include "ratelqg/matrix_util.hpp"
#include "ratelqg/maxdet.hpp"
#include "ratelqg/model.hpp"
#include "ratelqg/riccati.hpp"

using namespace ratelqg;
using Catch::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double urand(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::MatrixXd m1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

// ---------------------------------------------------------------------------
// Independent references. Everything below is derived from scalar recursions
// and elementary monotonicity arguments; none of it touches the cone solver.
// ---------------------------------------------------------------------------

struct ScalarGains {
    double s = 0.0;      // quadratic value weight
    double theta = 0.0;  // sensitivity weight in the budget row
    double phi = 0.0;    // closed-loop carry-over term
};

/// Plain fixed-point iteration for the scalar backward recursion.
ScalarGains scalar_riccati(double a, double b, double q, double r) {
    double s = q;
    for (int i = 0; i < 500000; ++i) {
        const double m = b * b * s + r;
        const double next = q + a * a * s * r / m;
        const bool done = std::abs(next - s) < 1e-15 * (1.0 + std::abs(next));
        s = next;
        if (done) break;
    }
    const double m = b * b * s + r;
    const double k = -a * b * s / m;
    ScalarGains g;
    g.s = s;
    g.theta = k * k * m;
    g.phi = a * s * (a + b * k);
    return g;
}

/// One-stage backward step for finite-horizon scalar recursions.
ScalarGains scalar_step(double a, double b, double s_next, double r) {
    const double m = b * b * s_next + r;
    const double k = -a * b * s_next / m;
    ScalarGains g;
    g.s = s_next;
    g.theta = k * k * m;
    g.phi = a * s_next * (a + b * k);
    return g;
}

/// Information rate of one scalar mode held at steady covariance P.
double mode_rate_nats(double a, double w, double P) {
    return 0.5 * std::log(a * a + w / P);
}

/// Largest steady covariance one scalar mode can reach.
double mode_cap(double a, double w) {
    return std::abs(a) < 1.0 ? w / (1.0 - a * a) : kInf;
}

/// The rate is strictly decreasing in P, so the scalar stationary optimum
/// sits at the largest feasible covariance.
double scalar_stationary_reference(double a, double w, const ScalarGains& g,
                                   double D) {
    const double excess = D - w * g.s;
    REQUIRE(excess > 0.0);
    const double P = std::min(excess / g.theta, mode_cap(a, w));
    return mode_rate_nats(a, w, P);
}

/// Multi-pass grid refinement for a continuous scalar function on [lo, hi].
/// Each pass scans an even grid and shrinks the window around the best cell.
template <typename F>
double refine_min(F f, double lo, double hi, int points, int passes) {
    double best = kInf;
    for (int pass = 0; pass < passes; ++pass) {
        const double h = (hi - lo) / (points - 1);
        best = kInf;
        double best_x = lo;
        for (int i = 0; i < points; ++i) {
            const double x = lo + h * i;
            const double v = f(x);
            if (v < best) {
                best = v;
                best_x = x;
            }
        }
        const double nlo = std::max(lo, best_x - 2.0 * h);
        const double nhi = std::min(hi, best_x + 2.0 * h);
        lo = nlo;
        hi = nhi;
    }
    return best;
}

struct Tv2Instance {
    double a1 = 0.0, a2 = 0.0, b1 = 0.0, b2 = 0.0;
    double w1 = 0.0, w2 = 0.0, q1 = 0.0, q2 = 0.0, r1 = 0.0, r2 = 0.0;
    double pinit = 0.0;
    double D = 0.0;
    // derived by the reference recursion
    double th1 = 0.0, th2 = 0.0, c2 = 0.0;
};

/// Two-stage scalar reference: the second-stage covariance is chosen in
/// closed form for each first-stage covariance, leaving a one-dimensional
/// search that grid refinement settles to far below the test tolerance.
double tv2_reference(const Tv2Instance& in) {
    const double excess = in.D - in.c2;
    REQUIRE(excess > 0.0);
    auto value = [&](double P1) {
        if (!(P1 > 0.0)) return kInf;
        const double pred = in.a1 * in.a1 * P1 + in.w1;
        const double by_budget = (excess - in.th1 * P1) / in.th2;
        if (!(by_budget > 0.0)) return kInf;
        const double P2 = std::min(pred, by_budget);
        // stage-1 transfer plus stage-2 transfer
        return 0.5 * std::log(in.pinit / P1) + 0.5 * std::log(pred / P2);
    };
    return refine_min(value, 1e-9 * in.pinit, in.pinit, 2001, 4);
}

TimeVaryingPlant tv2_plant(const Tv2Instance& in) {
    TimeVaryingPlant p;
    p.horizon = 2;
    p.A = {m1(in.a1), m1(in.a2)};
    p.B = {m1(in.b1), m1(in.b2)};
    p.W = {m1(in.w1), m1(in.w2)};
    p.Q = {m1(in.q1), m1(in.q2)};
    p.R = {m1(in.r1), m1(in.r2)};
    p.P_init = m1(in.pinit);
    return p;
}

/// Diagonal two-mode stationary reference: modes decouple except through the
/// shared budget, so sweep the budget split.
double two_mode_reference(double a1, double w1, double th1, double a2,
                          double w2, double th2, double excess) {
    REQUIRE(excess > 0.0);
    const double cap1 = mode_cap(a1, w1);
    const double cap2 = mode_cap(a2, w2);
    auto value = [&](double d) {
        const double P1 = std::min(d / th1, cap1);
        const double P2 = std::min((excess - d) / th2, cap2);
        if (!(P1 > 0.0) || !(P2 > 0.0)) return kInf;
        return mode_rate_nats(a1, w1, P1) + mode_rate_nats(a2, w2, P2);
    };
    return refine_min(value, excess * 1e-9, excess * (1.0 - 1e-9), 4001, 4);
}

StationaryPlant scalar_plant(double a, double b, double w, double q, double r) {
    StationaryPlant p;
    p.A = m1(a);
    p.B = m1(b);
    p.W = m1(w);
    p.Q = m1(q);
    p.R = m1(r);
    return p;
}

}  // namespace

// ===========================================================================
// Reference-value comparisons (the twenty-instance battery)
// ===========================================================================

TEST_CASE("scalar stationary solves match the closed-form reference",
          "[maxdet][reference]") {
    std::mt19937_64 rng(20250811u);
    int checked = 0;
    for (int i = 0; i < 14; ++i) {
        const bool stable = i < 7;
        double a = stable ? urand(rng, 0.2, 0.95) : urand(rng, 1.05, 2.2);
        if (urand(rng, 0.0, 1.0) < 0.5) a = -a;
        const double b = urand(rng, 0.5, 1.5);
        const double w = urand(rng, 0.3, 3.0);
        const double q = urand(rng, 0.4, 2.0);
        const double r = urand(rng, 0.4, 2.0);
        const double u = urand(rng, 0.1, 1.25);

        const ScalarGains g = scalar_riccati(a, b, q, r);
        const double target_P = u * std::min(mode_cap(a, w), 4.0 * w);
        const double D = w * g.s + g.theta * target_P;
        const double reference = scalar_stationary_reference(a, w, g, D);

        StationaryPlant plant = scalar_plant(a, b, w, q, r);
        RiccatiBundle bundle = solve_are(plant);
        CHECK(bundle.Theta[0](0, 0) == Approx(g.theta).margin(1e-8));

        MaxDetProblem prob = build_stationary_problem(plant, bundle, D);
        REQUIRE_FALSE(prob.known_infeasible);
        REQUIRE_FALSE(prob.initial_point.empty());
        MaxDetSolution sol = solve(prob);
        INFO("instance " << i << ": a=" << a << " b=" << b << " w=" << w
                         << " D=" << D);
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(std::abs(sol.objective_nats - reference) <= 1e-6);
        CHECK(sol.certificate_ok);
        ++checked;
    }
    CHECK(checked == 14);
}

TEST_CASE("two-stage scalar solves match the grid-refined reference",
          "[maxdet][reference]") {
    std::mt19937_64 rng(777231u);
    for (int i = 0; i < 3; ++i) {
        Tv2Instance in;
        in.a1 = urand(rng, 0.3, 1.8) * (urand(rng, 0.0, 1.0) < 0.5 ? -1 : 1);
        in.a2 = urand(rng, -1.8, 1.8);
        in.b1 = urand(rng, 0.6, 1.4);
        in.b2 = urand(rng, 0.6, 1.4);
        in.w1 = urand(rng, 0.4, 2.5);
        in.w2 = urand(rng, 0.4, 2.5);
        in.q1 = urand(rng, 0.4, 2.0);
        in.q2 = urand(rng, 0.4, 2.0);
        in.r1 = urand(rng, 0.4, 2.0);
        in.r2 = urand(rng, 0.4, 2.0);
        in.pinit = urand(rng, 0.6, 3.0);

        // Backward recursion by hand: stage 2 first, then stage 1.
        const double s2 = in.q2;
        const ScalarGains g2 = scalar_step(in.a2, in.b2, s2, in.r2);
        const double s1 = in.q1 + g2.phi;
        const ScalarGains g1 = scalar_step(in.a1, in.b1, s1, in.r1);
        in.th1 = g1.theta;
        in.th2 = g2.theta;
        in.c2 = g1.phi * in.pinit + in.w1 * s1 + in.w2 * s2;

        const double u = urand(rng, 0.15, 0.85);
        const double budget_span =
            in.th1 * in.pinit + in.th2 * (in.a1 * in.a1 * in.pinit + in.w1);
        in.D = in.c2 + u * budget_span;

        const double reference = tv2_reference(in);

        TimeVaryingPlant plant = tv2_plant(in);
        RiccatiBundle bundle = backward_riccati(plant);
        CHECK(bundle.Theta[0](0, 0) == Approx(in.th1).margin(1e-10));
        CHECK(bundle.Theta[1](0, 0) == Approx(in.th2).margin(1e-10));

        MaxDetProblem prob = build_tv_problem(plant, bundle, in.D);
        REQUIRE_FALSE(prob.known_infeasible);
        CHECK(prob.variables.size() == 3);  // P1, P2, Pi1
        MaxDetSolution sol = solve(prob);
        INFO("instance " << i << ": a1=" << in.a1 << " D=" << in.D);
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(std::abs(sol.objective_nats - reference) <= 1e-6);
        CHECK(sol.certificate_ok);
    }
}

TEST_CASE("diagonal two-mode solves match the budget-split reference",
          "[maxdet][reference]") {
    std::mt19937_64 rng(4405123u);
    for (int i = 0; i < 3; ++i) {
        const double a1 = urand(rng, 1.05, 1.9);   // one expanding mode
        const double a2 = urand(rng, 0.25, 0.9);   // one contracting mode
        const double b1 = urand(rng, 0.5, 1.5);
        const double b2 = urand(rng, 0.5, 1.5);
        const double w1 = urand(rng, 0.4, 2.0);
        const double w2 = urand(rng, 0.4, 2.0);
        const double q1 = urand(rng, 0.4, 2.0);
        const double q2 = urand(rng, 0.4, 2.0);
        const double r1 = urand(rng, 0.4, 2.0);
        const double r2 = urand(rng, 0.4, 2.0);

        const ScalarGains g1 = scalar_riccati(a1, b1, q1, r1);
        const ScalarGains g2 = scalar_riccati(a2, b2, q2, r2);
        auto room = [](double a, double w) {
            const double cap = mode_cap(a, w);
            return std::isfinite(cap) ? cap : 4.0 * w;
        };
        const double excess = urand(rng, 0.1, 0.8) * g1.theta * room(a1, w1) +
                              urand(rng, 0.1, 0.8) * g2.theta * room(a2, w2);
        const double reference =
            two_mode_reference(a1, w1, g1.theta, a2, w2, g2.theta, excess);

        StationaryPlant plant;
        plant.A = Eigen::Vector2d(a1, a2).asDiagonal();
        plant.B = Eigen::Vector2d(b1, b2).asDiagonal();
        plant.W = Eigen::Vector2d(w1, w2).asDiagonal();
        plant.Q = Eigen::Vector2d(q1, q2).asDiagonal();
        plant.R = Eigen::Vector2d(r1, r2).asDiagonal();
        RiccatiBundle bundle = solve_are(plant);
        const double D = (plant.W * bundle.S[0]).trace() + excess;

        MaxDetProblem prob = build_stationary_problem(plant, bundle, D);
        MaxDetSolution sol = solve(prob);
        INFO("instance " << i << ": a1=" << a1 << " a2=" << a2
                         << " excess=" << excess);
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(std::abs(sol.objective_nats - reference) <= 1e-6);
        CHECK(sol.certificate_ok);
    }
}

// ===========================================================================
// Boundary and feasibility behavior
// ===========================================================================

TEST_CASE("one-stage horizon hits zero rate exactly at the matching budget",
          "[maxdet]") {
    TimeVaryingPlant plant;
    plant.horizon = 1;
    plant.A = {m1(1.0)};
    plant.B = {m1(1.0)};
    plant.W = {m1(1.0)};
    plant.Q = {m1(1.0)};
    plant.R = {m1(1.0)};
    plant.P_init = m1(1.0);
    RiccatiBundle bundle = backward_riccati(plant);
    // Hand recursion: S1 = 1, M = 2, K = -1/2, Theta = 1/2, Phi = 1/2,
    // so the budget floor is 0.5 * 1 + 1 * 1 = 1.5.
    MaxDetProblem prob = build_tv_problem(plant, bundle, 2.0);
    CHECK(prob.budget_floor == Approx(1.5).margin(1e-12));
    MaxDetSolution sol = solve(prob);
    REQUIRE(sol.status == SolveStatus::optimal);
    // D = 2 leaves exactly enough budget for P1 to meet the prior, so no
    // information transfer is needed.
    CHECK(std::abs(sol.objective_nats) <= 1e-6);

    MaxDetProblem below = build_tv_problem(plant, bundle, 0.5);
    CHECK(below.known_infeasible);
    MaxDetSolution bad = solve(below);
    CHECK(bad.status == SolveStatus::infeasible);
    CHECK(bad.message.find("floor") != std::string::npos);
}

TEST_CASE("hand-built conic systems route through the feasibility phase",
          "[maxdet]") {
    auto scalar_box = [](double lo, double hi) {
        MaxDetProblem prob;
        prob.variables.push_back({"x", 1});
        AffineExpr above;  // x - lo >= 0
        above.dim = 1;
        above.constant = m1(-lo);
        above.congruences.push_back({0, 1.0, m1(1.0)});
        prob.constraints.push_back(above);
        AffineExpr beneath;  // hi - x >= 0
        beneath.dim = 1;
        beneath.constant = m1(hi);
        beneath.congruences.push_back({0, -1.0, m1(1.0)});
        prob.constraints.push_back(beneath);
        LogDetTerm term;  // maximize log x
        term.weight = 1.0;
        term.expr.dim = 1;
        term.expr.constant = m1(0.0);
        term.expr.congruences.push_back({0, 1.0, m1(1.0)});
        prob.objective.push_back(term);
        return prob;
    };

    SECTION("contradictory bounds are declared infeasible") {
        MaxDetSolution sol = solve(scalar_box(2.0, 1.0));
        CHECK(sol.status == SolveStatus::infeasible);
        CHECK(sol.infeasibility > 1e-3);
    }
    SECTION("a solvable box is optimized from a cold start") {
        MaxDetSolution sol = solve(scalar_box(0.2, 1.0));
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(std::abs(sol.objective_nats) <= 1e-6);  // -log(1) at x = 1
        CHECK(sol.values[0](0, 0) == Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("solver rejects malformed problems", "[maxdet]") {
    MaxDetProblem empty;
    CHECK_THROWS_AS(solve(empty), std::invalid_argument);

    MaxDetProblem bad;
    bad.variables.push_back({"x", 1});
    AffineExpr expr;
    expr.dim = 1;
    expr.constant = m1(1.0);
    expr.congruences.push_back({3, 1.0, m1(1.0)});  // variable out of range
    bad.constraints.push_back(expr);
    CHECK_THROWS_AS(solve(bad), std::invalid_argument);
}

// ===========================================================================
// Builder cross-checks
// ===========================================================================

namespace {

TimeVaryingPlant random_tv(int n, int T, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    auto randn = [&](int r, int c) {
        Eigen::MatrixXd M(r, c);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) M(i, j) = normal(rng);
        }
        return M;
    };
    auto rand_pd = [&](double shift) {
        Eigen::MatrixXd M = randn(n, n);
        return Eigen::MatrixXd(symmetrized(M * M.transpose()) +
                               shift * Eigen::MatrixXd::Identity(n, n));
    };
    TimeVaryingPlant p;
    p.horizon = T;
    for (int t = 0; t < T; ++t) {
        Eigen::MatrixXd A = 0.6 * randn(n, n);
        if (std::abs(A.determinant()) < 0.05) {
            A += 0.5 * Eigen::MatrixXd::Identity(n, n);
        }
        p.A.push_back(A);
        p.B.push_back(randn(n, n) + 0.3 * Eigen::MatrixXd::Identity(n, n));
        p.W.push_back(rand_pd(0.3));
        p.Q.push_back(rand_pd(0.2));
        p.R.push_back(rand_pd(0.4));
    }
    p.P_init = rand_pd(0.3);
    return p;
}

}  // namespace

TEST_CASE("full-rank noise gives the same value through both formulations",
          "[maxdet][builders]") {
    std::mt19937_64 rng(90921u);
    TimeVaryingPlant plant = random_tv(2, 3, rng);
    RiccatiBundle bundle = backward_riccati(plant);
    MaxDetProblem direct = build_tv_problem(plant, bundle, 0.0);
    const double D = direct.budget_floor + 2.0;

    MaxDetSolution a = solve(build_tv_problem(plant, bundle, D));
    MaxDetSolution b = solve(build_tv_singular_problem(plant, bundle, D));
    REQUIRE(a.status == SolveStatus::optimal);
    REQUIRE(b.status == SolveStatus::optimal);
    CHECK(std::abs(a.objective_nats - b.objective_nats) <= 1e-6);
    CHECK(a.certificate_ok);
    CHECK(b.certificate_ok);
}

TEST_CASE("rank-deficient process noise matches an independent reference",
          "[maxdet][reference]") {
    // Two stages with zero noise entering between them: the second-stage
    // covariance is limited by the deterministic image of the first, so the
    // search reduces to one dimension again.
    Tv2Instance in;
    in.a1 = 1.3;
    in.a2 = 0.7;
    in.b1 = in.b2 = 1.0;
    in.w1 = 0.0;  // stage-1 noise identically zero
    in.w2 = 1.0;
    in.q1 = in.q2 = 1.0;
    in.r1 = in.r2 = 1.0;
    in.pinit = 2.0;

    const double s2 = in.q2;
    const ScalarGains g2 = scalar_step(in.a2, in.b2, s2, in.r2);
    const double s1 = in.q1 + g2.phi;
    const ScalarGains g1 = scalar_step(in.a1, in.b1, s1, in.r1);
    const double c2 = g1.phi * in.pinit + in.w1 * s1 + in.w2 * s2;
    const double excess =
        0.5 * (g1.theta * in.pinit + g2.theta * in.a1 * in.a1 * in.pinit);
    in.D = c2 + excess;

    // Reference: P2 <= a1^2 P1 (no noise) and the budget row.
    auto value = [&](double P1) {
        if (!(P1 > 0.0)) return kInf;
        const double pred = in.a1 * in.a1 * P1;
        const double by_budget = (excess - g1.theta * P1) / g2.theta;
        if (!(by_budget > 0.0)) return kInf;
        const double P2 = std::min(pred, by_budget);
        return 0.5 * std::log(in.pinit / P1) + std::log(std::abs(in.a1)) +
               0.5 * std::log(P1 / P2);
    };
    const double reference = refine_min(value, 1e-9, in.pinit, 2001, 4);

    TimeVaryingPlant plant = tv2_plant(in);
    RiccatiBundle bundle = backward_riccati(plant);
    CHECK_THROWS_WITH(build_tv_problem(plant, bundle, in.D),
                      Catch::Matchers::ContainsSubstring("rank deficient"));
    MaxDetProblem prob = build_tv_singular_problem(plant, bundle, in.D);
    CHECK(prob.variables.size() == 2);  // P1, P2; no noise block to carry
    MaxDetSolution sol = solve(prob);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(std::abs(sol.objective_nats - reference) <= 1e-6);
    CHECK(sol.certificate_ok);
}

TEST_CASE("builder preconditions are enforced", "[maxdet][builders]") {
    std::mt19937_64 rng(5150u);
    TimeVaryingPlant plant = random_tv(2, 2, rng);
    RiccatiBundle bundle = backward_riccati(plant);

    SECTION("singular transition blocks the rank-deficient variant") {
        plant.A[0] = Eigen::MatrixXd::Zero(2, 2);
        RiccatiBundle b2 = backward_riccati(plant);
        CHECK_THROWS_WITH(build_tv_singular_problem(plant, b2, 100.0),
                          Catch::Matchers::ContainsSubstring("nonsingular"));
    }
    SECTION("stationary builder requires positive definite noise") {
        StationaryPlant sp = scalar_plant(0.5, 1.0, 1.0, 1.0, 1.0);
        RiccatiBundle sb = solve_are(sp);
        sp.W = m1(0.0);
        CHECK_THROWS_AS(build_stationary_problem(sp, sb, 10.0),
                        std::invalid_argument);
    }
    SECTION("dimension mismatch is rejected") {
        CHECK_THROWS_AS(build_vstar_problem(Eigen::MatrixXd::Zero(2, 3),
                                            Eigen::MatrixXd::Identity(2, 2)),
                        std::invalid_argument);
    }
}

TEST_CASE("cold start and analytic start agree", "[maxdet]") {
    StationaryPlant plant = scalar_plant(1.4, 1.0, 1.0, 1.0, 1.0);
    RiccatiBundle bundle = solve_are(plant);
    const double D = (plant.W * bundle.S[0]).trace() + 3.0;
    MaxDetProblem prob = build_stationary_problem(plant, bundle, D);
    MaxDetSolution warm = solve(prob);
    prob.initial_point.clear();
    MaxDetSolution cold = solve(prob);
    REQUIRE(warm.status == SolveStatus::optimal);
    REQUIRE(cold.status == SolveStatus::optimal);
    CHECK(std::abs(warm.objective_nats - cold.objective_nats) <= 1e-7);
}

// ===========================================================================
// The rate floor problem
// ===========================================================================

TEST_CASE("rate floor vanishes for a contracting system", "[maxdet][vstar]") {
    std::mt19937_64 rng(31337u);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd A(2, 2);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) A(i, j) = normal(rng);
    }
    A *= 0.8 / spectral_radius(A);
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(2, 2);
    MaxDetSolution sol = solve(build_vstar_problem(A, W));
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(std::abs(sol.objective_nats) <= 1e-5);
}

TEST_CASE("rate floor collects the expanding modes", "[maxdet][vstar]") {
    SECTION("one expanding, one contracting") {
        Eigen::MatrixXd A = Eigen::Vector2d(1.5, 0.7).asDiagonal();
        MaxDetSolution sol =
            solve(build_vstar_problem(A, Eigen::MatrixXd::Identity(2, 2)));
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(sol.objective_nats == Approx(std::log(1.5)).margin(5e-5));
    }
    SECTION("both expanding") {
        Eigen::MatrixXd A = Eigen::Vector2d(2.0, 1.5).asDiagonal();
        MaxDetSolution sol =
            solve(build_vstar_problem(A, Eigen::MatrixXd::Identity(2, 2)));
        REQUIRE(sol.status == SolveStatus::optimal);
        CHECK(sol.objective_nats == Approx(std::log(3.0)).margin(5e-5));
    }
}

// ===========================================================================
// Frozen regression: the benchmark scalar budget
// ===========================================================================

TEST_CASE("benchmark scalar budget reproduces the frozen rate", "[maxdet]") {
    StationaryPlant plant = scalar_plant(2.0, 1.0, 1.0, 1.0, 1.0);
    RiccatiBundle bundle = solve_are(plant);
    MaxDetProblem prob = build_stationary_problem(plant, bundle, 11.09017);
    MaxDetSolution sol = solve(prob);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.objective_nats / std::log(2.0) ==
          Approx(1.29248).margin(1e-4));
}
