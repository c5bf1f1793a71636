#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "ratelqg/errors.hpp"
#include "ratelqg/matrix_util.hpp"
#include "ratelqg/model.hpp"
#include "ratelqg/riccati.hpp"

using namespace ratelqg;
using Catch::Approx;

namespace {

StationaryPlant scalar_plant(double a, double b, double w, double q, double r) {
    StationaryPlant p;
    p.A = Eigen::MatrixXd::Constant(1, 1, a);
    p.B = Eigen::MatrixXd::Constant(1, 1, b);
    p.W = Eigen::MatrixXd::Constant(1, 1, w);
    p.Q = Eigen::MatrixXd::Constant(1, 1, q);
    p.R = Eigen::MatrixXd::Constant(1, 1, r);
    return p;
}

StationaryPlant random_stationary(int n, std::mt19937_64& rng, double radius) {
    std::normal_distribution<double> normal;
    auto randn = [&](int r, int c) {
        Eigen::MatrixXd M(r, c);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) M(i, j) = normal(rng);
        }
        return M;
    };
    StationaryPlant p;
    p.A = randn(n, n);
    p.A *= radius / std::max(spectral_radius(p.A), 1e-6);
    p.B = randn(n, n);
    p.B += 0.3 * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd Mq = randn(n, n);
    p.Q = symmetrized(Mq * Mq.transpose()) + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd Mr = randn(n, n);
    p.R = symmetrized(Mr * Mr.transpose()) + 0.5 * Eigen::MatrixXd::Identity(n, n);
    p.W = Eigen::MatrixXd::Identity(n, n);
    return p;
}

}  // namespace

TEST_CASE("scalar stationary solve matches the hand-derived fixed point",
          "[riccati]") {
    // For a=2, b=1, q=r=1 the fixed point solves s = 1 + 4s/(s+1), whose
    // positive root is s = 2 + sqrt(5). Derived constants frozen below.
    RiccatiBundle bundle = solve_are(scalar_plant(2.0, 1.0, 1.0, 1.0, 1.0));
    REQUIRE(bundle.S.size() == 1);
    CHECK(bundle.S[0](0, 0) == Approx(4.23606797749979).margin(1e-9));
    CHECK(bundle.M[0](0, 0) == Approx(5.23606797749979).margin(1e-9));
    CHECK(bundle.K[0](0, 0) == Approx(-1.618033988749895).margin(1e-9));
    CHECK(bundle.Theta[0](0, 0) == Approx(13.708203932499369).margin(1e-8));
    CHECK(bundle.Phi[0](0, 0) == Approx(3.23606797749979).margin(1e-9));
}

TEST_CASE("two-stage backward recursion matches hand recursion", "[riccati]") {
    // a=2, b=1, q=r=1 at both stages:
    //   stage 2: S=1, M=2, K=-1, Theta=2, Phi=2
    //   stage 1: S=1+2=3, M=4, K=-6/4, Theta=9, Phi=3
    TimeVaryingPlant p;
    p.horizon = 2;
    auto c = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
    p.A = {c(2.0), c(2.0)};
    p.B = {c(1.0), c(1.0)};
    p.W = {c(1.0), c(1.0)};
    p.Q = {c(1.0), c(1.0)};
    p.R = {c(1.0), c(1.0)};
    p.P_init = c(1.0);

    RiccatiBundle bundle = backward_riccati(p);
    REQUIRE(bundle.S.size() == 2);
    CHECK(bundle.S[0](0, 0) == Approx(3.0).margin(1e-12));
    CHECK(bundle.S[1](0, 0) == Approx(1.0).margin(1e-12));
    CHECK(bundle.K[0](0, 0) == Approx(-1.5).margin(1e-12));
    CHECK(bundle.K[1](0, 0) == Approx(-1.0).margin(1e-12));
    CHECK(bundle.Theta[0](0, 0) == Approx(9.0).margin(1e-12));
    CHECK(bundle.Theta[1](0, 0) == Approx(2.0).margin(1e-12));
    CHECK(bundle.Phi[0](0, 0) == Approx(3.0).margin(1e-12));
    CHECK(bundle.Phi[1](0, 0) == Approx(2.0).margin(1e-12));
}

TEST_CASE("stationary solutions satisfy the fixed-point equation", "[riccati]") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 2 + trial % 2;
        StationaryPlant p = random_stationary(n, rng, trial % 2 == 0 ? 0.8 : 1.4);
        auto report = validate_stationary(p);
        REQUIRE(report.ok());

        RiccatiBundle bundle = solve_are(p);
        const Eigen::MatrixXd& S = bundle.S[0];
        const Eigen::MatrixXd BtS = p.B.transpose() * S;
        const Eigen::MatrixXd residual =
            p.A.transpose() * S * p.A - S -
            (BtS * p.A).transpose() *
                (symmetrized(p.B.transpose() * S * p.B + p.R))
                    .llt()
                    .solve(BtS * p.A) +
            p.Q;
        const double scale = 1.0 + S.cwiseAbs().maxCoeff();
        CHECK(residual.cwiseAbs().maxCoeff() / scale < 1e-8);
        CHECK(sym_min_eigenvalue(S) > -1e-9 * scale);
        CHECK(spectral_radius(p.A + p.B * bundle.K[0]) < 1.0);
        // At the fixed point the propagated weight equals S - Q.
        CHECK((bundle.Phi[0] - (S - p.Q)).cwiseAbs().maxCoeff() < 1e-7 * scale);
    }
}

TEST_CASE("long-horizon recursion approaches the stationary solution",
          "[riccati]") {
    std::mt19937_64 rng(123);
    StationaryPlant sp = random_stationary(2, rng, 1.2);
    REQUIRE(validate_stationary(sp).ok());
    RiccatiBundle stationary = solve_are(sp);

    TimeVaryingPlant tv;
    tv.horizon = 60;
    tv.A.assign(60, sp.A);
    tv.B.assign(60, sp.B);
    tv.W.assign(60, sp.W);
    tv.Q.assign(60, sp.Q);
    tv.R.assign(60, sp.R);
    tv.P_init = Eigen::MatrixXd::Identity(2, 2);
    RiccatiBundle finite = backward_riccati(tv);

    const double scale = 1.0 + stationary.S[0].cwiseAbs().maxCoeff();
    CHECK((finite.S[0] - stationary.S[0]).cwiseAbs().maxCoeff() / scale < 1e-8);
    CHECK((finite.K[0] - stationary.K[0]).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((finite.Theta[0] - stationary.Theta[0]).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("stationary covariance equation solves and validates", "[riccati]") {
    SECTION("scalar fixed point") {
        // p = a^2 p + w at a=0.5, w=1 gives p = 4/3.
        Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 0.5);
        Eigen::MatrixXd W = Eigen::MatrixXd::Constant(1, 1, 1.0);
        Eigen::MatrixXd P = lyapunov_stationary(A, W);
        CHECK(P(0, 0) == Approx(4.0 / 3.0).margin(1e-12));
    }
    SECTION("random stable system satisfies the equation") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> normal;
        Eigen::MatrixXd A(3, 3), F(3, 3);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                A(i, j) = normal(rng);
                F(i, j) = normal(rng);
            }
        }
        A *= 0.8 / spectral_radius(A);
        Eigen::MatrixXd W =
            symmetrized(F * F.transpose()) + 0.1 * Eigen::MatrixXd::Identity(3, 3);
        Eigen::MatrixXd P = lyapunov_stationary(A, W);
        CHECK((P - A * P * A.transpose() - W).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(sym_min_eigenvalue(P) > 0.0);
    }
    SECTION("unstable dynamics rejected") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 1.0);
        Eigen::MatrixXd W = Eigen::MatrixXd::Constant(1, 1, 1.0);
        CHECK_THROWS_AS(lyapunov_stationary(A, W), std::invalid_argument);
    }
}
