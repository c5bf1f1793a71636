#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "ratelqg/model.hpp"
#include "ratelqg/synthesis.hpp"

namespace ratelqg {

/// Monte-Carlo configuration for closed-loop runs. `steps * trials` is capped
/// by `max_stage_samples`; exceeding it is rejected up front. `threads` only
/// schedules the independent trials across workers — results are bit-identical
/// for any value. When `trajectory_path` is nonempty, trial 0 is dumped as a
/// CSV with columns t, x[i]..., u[j]..., xhat[i]....
struct SimConfig {
    int steps = 0;
    int trials = 0;
    std::uint64_t seed = 0;
    double max_stage_samples = 1e8;
    int threads = 1;
    std::filesystem::path trajectory_path;
};

/// Outcome of a closed-loop Monte-Carlo run. Per-trial summaries are indexed
/// by trial; per-stage sample moments are averaged across the trials that
/// reached the stage. `trial_costs` holds each trial's average stage cost
/// (state weight applied to the successor state). `trial_orthogonality` holds
/// each trial's stage average of xhat' Q (x - xhat), the projection residual
/// that vanishes in expectation for a correctly wired filter.
/// `trial_lag_correlations` holds normalized innovation autocorrelations at
/// lags 1..5 (physical-sensor innovations for partially observed designs,
/// virtual-sensor innovations otherwise; stages without a measurement are
/// skipped). `sample_filter_covariances` tracks the error between the filter
/// estimate and the state it tracks (the forward-filter state for partially
/// observed designs). A trial whose state norm exceeds 1e9 (or turns
/// non-finite) is stopped at that stage and flagged; every reported statistic
/// stays finite, and `divergence_stage` is the earliest 1-based stage at
/// which any trial was stopped.
struct SimResult {
    int steps = 0;
    int trials = 0;
    int state_dim = 0;
    int input_dim = 0;
    std::vector<double> trial_costs;
    std::vector<double> trial_orthogonality;
    std::vector<std::array<double, 5>> trial_lag_correlations;
    std::vector<Eigen::MatrixXd> sample_filter_covariances;
    std::vector<Eigen::MatrixXd> innovation_sample_covariances;
    double max_state_norm = 0.0;
    bool diverged = false;
    int divergence_stage = -1;
};

/// Runs the synthesized sensor/filter/controller loop against the plant:
/// x_{t+1} = A x_t + B u_t + w_t with the design's virtual sensor
/// y_t = C x_t + v_t, measurement-updated estimate, and u_t = K xhat_t.
/// Partially observed designs additionally simulate the physical sensor and
/// the forward filter, and the virtual sensor reads the filter state.
/// Stationary designs run for `config.steps` stages and start at the
/// stationary law of the closed loop, so every stage is statistically
/// identical; finite-horizon designs require `config.steps` to equal the
/// horizon and start from the plant's initial distribution. Fixed seeds give
/// bit-identical results regardless of trial scheduling. Only dimensional
/// compatibility is enforced (degenerate covariances such as a zero process
/// noise are accepted here even though synthesis rejects them). Throws
/// std::invalid_argument on dimension mismatches or config violations.
SimResult simulate_closed_loop(const SynthesisDesign& design, const PlantModel& plant,
                               const SimConfig& config);

/// Mean and between-trial standard error of the per-stage cost. Requires at
/// least two trials (the standard error is undefined otherwise).
std::pair<double, double> empirical_cost(const SimResult& result);

/// Sample estimate of E[xhat' Q (x - xhat)] with its standard error; the
/// check passes when the estimate is within four standard errors of zero
/// (an exactly zero estimate with zero spread also passes).
struct OrthogonalityReport {
    double estimate = 0.0;
    double std_error = 0.0;
    bool pass = false;
};

OrthogonalityReport orthogonality_check(const SimResult& result,
                                        const SynthesisDesign& design);

/// Innovation autocorrelations at lags 1..5 with 95% confidence half-widths
/// computed from the between-trial spread; the check passes when every lag's
/// mean correlation lies inside its band.
struct WhitenessReport {
    std::array<double, 5> correlation{};
    std::array<double, 5> band{};
    bool pass = false;
};

WhitenessReport whiteness_check(const SimResult& result);

}  // namespace ratelqg
