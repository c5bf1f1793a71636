#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ratelqg/kalman.hpp"
#include "ratelqg/maxdet.hpp"
#include "ratelqg/model.hpp"
#include "ratelqg/riccati.hpp"

namespace ratelqg {

/// Knobs shared by the synthesis entry points.
struct SynthesisOptions {
    SolverSettings solver;         // barrier solver configuration
    double rank_threshold = 1e-3;  // relative eigenvalue cut when factoring sensors
    int threads = 1;               // worker cap for tradeoff_curve (values <= 1 run serially)
};

/// Complete realization of a rate-limited controller: the certainty-equivalence
/// gains, the optimized covariance schedule, the virtual sensor(s) that acquire
/// exactly the information the budget admits, and the matching filter gains.
/// Stationary designs hold one entry per per-stage vector; `DI_bits` is then a
/// per-stage rate, otherwise the total over the horizon. Partially observed
/// designs carry the forward filter on the physical sensor in `prekf`, and
/// their schedule/sensors live on the filter-state surrogate.
struct SynthesisDesign {
    RiccatiBundle bundle;
    CovarianceSchedule schedule;
    std::vector<SensorDesign> sensors;
    std::vector<Eigen::MatrixXd> L;  // virtual-sensor filter gains, per stage
    std::optional<PreKFDesign> prekf;
    double DI_bits = 0.0;
    double J_analytic = 0.0;
    double D_requested = 0.0;
    double gap_estimate = 0.0;
    bool stationary = false;
    bool partially_observed = false;
    int horizon = 0;  // 0 for stationary designs
};

/// One point of a rate/cost trade-off sweep. Infeasible budgets (at or below
/// the cost floor) and failed solves yield `feasible == false` with the rate
/// fields left as NaN.
struct TradeoffSample {
    double D = 0.0;
    double DI_bits = 0.0;
    int rank = 0;
    double R_upper_bits = 0.0;
    bool feasible = false;
};

/// Trade-off sweep result. `asymptote_bits` is the stabilization floor of the
/// plant's A matrix (0 for finite-horizon plants, where no such floor exists)
/// and `Dmin` the perfect-information cost floor below which every budget is
/// infeasible.
struct TradeoffCurve {
    std::vector<TradeoffSample> samples;
    double asymptote_bits = 0.0;
    double Dmin = 0.0;
};

/// Conservative-coding rate bounds implied by a rate value and sensor rank:
/// `lower` is the rate itself, `upper` adds the rank-dependent lattice-quantizer
/// and prefix-free-coding overhead (r/2) * log2(4*pi*e/12) + 1.
struct OperationalBounds {
    double lower_bits = 0.0;
    double upper_bits = 0.0;
};

// ============================================================================
// Synthesis entry points
// ============================================================================

/// Finite-horizon synthesis at total cost budget D. Validates the plant,
/// solves the covariance program (routing singular process noise to the
/// rank-deficient formulation), and realizes sensors, filter, and controller.
/// Throws std::invalid_argument on malformed plants, InfeasibleBudget when D
/// does not exceed the cost floor, SolverFailure on numerical failure.
SynthesisDesign synthesize_tv(const TimeVaryingPlant& plant, double D,
                              const SynthesisOptions& options = {});

/// Stationary synthesis at per-stage cost budget D.
SynthesisDesign synthesize_stationary(const StationaryPlant& plant, double D,
                                      const SynthesisOptions& options = {});

/// Partially observed synthesis: runs the forward filter on the physical
/// sensor, reduces the plant to its filter state, and synthesizes on the
/// surrogate. The requested D is the total cost of the original plant; the
/// filtering error's unavoidable contribution is accounted automatically.
SynthesisDesign synthesize_po(const PartiallyObservedPlant& plant, double D,
                              const SynthesisOptions& options = {});

// ============================================================================
// Analytic evaluations
// ============================================================================

/// Information rate of a covariance schedule in bits: sum over stages of
/// (1/2) log2 det P_pred - (1/2) log2 det P_filt. `A` and `noise` are the
/// per-stage dynamics and process-noise covariances (single entries for a
/// stationary schedule, in which case the prediction step is applied to the
/// fixed point). Verifies the prediction recursion that links consecutive
/// schedule entries and throws std::invalid_argument when it is violated.
double directed_info_analytic(const CovarianceSchedule& schedule,
                              const std::vector<Eigen::MatrixXd>& A,
                              const std::vector<Eigen::MatrixXd>& noise);

/// Expected control cost of running the certainty-equivalence gains against a
/// filter with the given covariance schedule: the perfect-information floor
/// plus the estimation-error surcharge sum_t Tr(Theta_t P_filt_t). Total cost
/// for the finite-horizon overload, per-stage for the stationary one.
double cost_analytic(const RiccatiBundle& bundle, const CovarianceSchedule& schedule,
                     const TimeVaryingPlant& plant);
double cost_analytic(const RiccatiBundle& bundle, const CovarianceSchedule& schedule,
                     const StationaryPlant& plant);

/// Minimum rate in bits for mean-square stabilizability: sum of log2|lambda|
/// over eigenvalues of A with |lambda| >= 1.
double data_rate_asymptote(const Eigen::Ref<const Eigen::MatrixXd>& A);

OperationalBounds operational_bounds(double DI_bits, int rank);

// ============================================================================
// Trade-off sweeps
// ============================================================================

/// Synthesizes a design per grid point and records (D, rate, rank, coding
/// upper bound). The grid must be nonempty, strictly positive, and sorted
/// ascending. Budgets at or below the floor produce infeasible samples rather
/// than aborting the sweep (as does a solver failure at an isolated point).
/// With options.threads > 1 the points are solved concurrently; results are
/// deterministic regardless of scheduling.
TradeoffCurve tradeoff_curve(const PlantModel& plant, const std::vector<double>& D_grid,
                             const SynthesisOptions& options = {});

// ============================================================================
// Serialization
// ============================================================================

/// JSON rendering of a design's deployable pieces: gains K and L, sensor C
/// and V, covariance schedule, rate, cost, and sensor rank (plus the forward
/// filter gains and innovation covariances for partially observed designs).
/// Stationary designs store single matrices, finite-horizon designs store
/// per-stage lists; matrices are nested row-major arrays.
std::string serialize_design(const SynthesisDesign& design);

void save_design(const SynthesisDesign& design, const std::filesystem::path& path);

}  // namespace ratelqg
