#include "ratelqg/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "ratelqg/matrix_util.hpp"

namespace ratelqg {
namespace {

constexpr double kDivergenceNorm = 1e9;

// Trials are aggregated in fixed-size blocks and the blocks are combined in
// index order, so the floating-point summation tree — and therefore every
// reported statistic — does not depend on how many workers the blocks were
// scheduled onto.
constexpr int kTrialBlock = 64;

void expect(bool condition, const std::string& message) {
    if (!condition) throw std::invalid_argument(message);
}

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Standard-normal stream with a bit-level contract: mt19937_64 driving a
/// Box-Muller transform on 53-bit uniforms. std::normal_distribution does not
/// pin its algorithm across standard libraries, which would break the
/// bit-identical-rerun guarantee.
class GaussianStream {
  public:
    explicit GaussianStream(std::uint64_t state) : eng_(state) {}

    double next() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    Eigen::VectorXd vector(int n) {
        Eigen::VectorXd z(n);
        for (int i = 0; i < n; ++i) z[i] = next();
        return z;
    }

  private:
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

std::uint64_t trial_stream_state(std::uint64_t seed, int trial) {
    return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(trial + 1)));
}

double pairwise_sum(const double* data, std::size_t count) {
    if (count <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) s += data[i];
        return s;
    }
    const std::size_t half = count / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, count - half);
}

double pairwise_sum(const std::vector<double>& values) {
    return pairwise_sum(values.data(), values.size());
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& values) {
    const auto count = values.size();
    const double mean = pairwise_sum(values) / static_cast<double>(count);
    std::vector<double> squares(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double d = values[i] - mean;
        squares[i] = d * d;
    }
    const double variance = pairwise_sum(squares) / static_cast<double>(count - 1);
    return {mean, std::sqrt(variance / static_cast<double>(count))};
}

/// Stage-indexed tables for the closed loop, precomputed once so the trial
/// loop is pure mat-vec work. Stationary designs store one entry per table.
struct LoopPlan {
    bool stationary = false;
    bool po = false;
    int T = 0;
    int n = 0, m = 0, p = 0;
    std::vector<Eigen::MatrixXd> A, B, Wsqrt, Q, R, K;
    std::vector<Eigen::MatrixXd> C, Vsqrt, L;         // virtual sensor
    std::vector<Eigen::MatrixXd> H, Gsqrt, Ltilde;    // physical sensor (PO only)
    Eigen::MatrixXd init_state_sqrt;  // square root of the initial error/state law
    Eigen::MatrixXd init_est_sqrt;    // square root of the stationary estimate law

    const Eigen::MatrixXd& at(const std::vector<Eigen::MatrixXd>& table, int i) const {
        return table[stationary ? 0 : i];
    }
};

void push_sensor_stage(LoopPlan& plan, const SensorDesign& sensor, const Eigen::MatrixXd& L) {
    if (sensor.rank <= 0 || sensor.C.rows() == 0) {
        plan.C.push_back(Eigen::MatrixXd::Zero(0, plan.n));
        plan.Vsqrt.push_back(Eigen::MatrixXd::Zero(0, 0));
        plan.L.push_back(Eigen::MatrixXd::Zero(plan.n, 0));
        return;
    }
    expect(sensor.C.cols() == plan.n && sensor.V.rows() == sensor.C.rows(),
           "simulate_closed_loop: sensor dimensions do not match the plant state");
    expect(L.rows() == plan.n && L.cols() == sensor.C.rows(),
           "simulate_closed_loop: filter gain dimensions do not match the sensor");
    plan.C.push_back(sensor.C);
    plan.Vsqrt.push_back(psd_sqrt(sensor.V));
    plan.L.push_back(L);
}

void check_stage_matrices(const LoopPlan& plan, int i) {
    expect(plan.A[i].rows() == plan.n && plan.A[i].cols() == plan.n &&
               plan.B[i].rows() == plan.n && plan.B[i].cols() == plan.m &&
               plan.Q[i].rows() == plan.n && plan.R[i].rows() == plan.m,
           "simulate_closed_loop: plant stage matrices have inconsistent dimensions");
    expect(plan.K[i].rows() == plan.m && plan.K[i].cols() == plan.n,
           "simulate_closed_loop: control gain dimensions do not match the plant");
}

/// Stationary covariance of the estimate process xhat_{t+1} = (A+BK) xhat_t +
/// L nu_{t+1} with white innovations of covariance C P_pred C' + V. Starting
/// trials at this law (together with the prior-error law P_pred) makes every
/// stage of a stationary run statistically identical, so the empirical stage
/// cost estimates the analytic cost without a transient. An unstable closed
/// loop has no such law; the iteration is then abandoned and trials start at
/// a zero estimate (such runs are expected to trip the divergence guard).
Eigen::MatrixXd stationary_estimate_cov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                        const Eigen::MatrixXd& K, const Eigen::MatrixXd& C,
                                        const Eigen::MatrixXd& V, const Eigen::MatrixXd& L,
                                        const Eigen::MatrixXd& P_pred) {
    const int n = static_cast<int>(A.rows());
    const Eigen::MatrixXd Acl = A + B * K;
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(n, n);
    if (C.rows() > 0) {
        const Eigen::MatrixXd Snu = C * P_pred * C.transpose() + V;
        noise = L * Snu * L.transpose();
    }
    Eigen::MatrixXd Sigma = Eigen::MatrixXd::Zero(n, n);
    for (int it = 0; it < 20000; ++it) {
        Eigen::MatrixXd next = Acl * Sigma * Acl.transpose() + noise;
        if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e12)
            return Eigen::MatrixXd::Zero(n, n);
        const double scale = 1.0 + next.cwiseAbs().maxCoeff();
        const double change = (next - Sigma).cwiseAbs().maxCoeff();
        Sigma = std::move(next);
        if (change <= 1e-14 * scale) break;
    }
    return symmetrized(Sigma);
}

LoopPlan make_plan(const SynthesisDesign& design, const PlantModel& plant, const SimConfig& config) {
    LoopPlan plan;
    plan.T = config.steps;
    if (std::holds_alternative<StationaryPlant>(plant)) {
        const auto& sp = std::get<StationaryPlant>(plant);
        expect(design.stationary && !design.partially_observed,
               "simulate_closed_loop: a stationary plant requires a stationary fully observed design");
        plan.stationary = true;
        plan.n = sp.state_dim();
        plan.m = sp.input_dim();
        expect(design.bundle.K.size() == 1 && design.sensors.size() == 1 &&
                   design.L.size() == 1 && design.schedule.P_pred.size() == 1,
               "simulate_closed_loop: stationary design must carry exactly one stage entry");
        plan.A = {sp.A};
        plan.B = {sp.B};
        plan.Wsqrt = {psd_sqrt(sp.W)};
        plan.Q = {sp.Q};
        plan.R = {sp.R};
        plan.K = {design.bundle.K[0]};
        check_stage_matrices(plan, 0);
        push_sensor_stage(plan, design.sensors[0], design.L[0]);
        expect(design.schedule.P_pred[0].rows() == plan.n,
               "simulate_closed_loop: design schedule dimensions do not match the plant");
        plan.init_state_sqrt = psd_sqrt(design.schedule.P_pred[0]);
        plan.init_est_sqrt = psd_sqrt(stationary_estimate_cov(
            sp.A, sp.B, plan.K[0], plan.C[0], design.sensors[0].V, plan.L[0],
            design.schedule.P_pred[0]));
        return plan;
    }

    const bool is_po = std::holds_alternative<PartiallyObservedPlant>(plant);
    const TimeVaryingPlant& base =
        is_po ? std::get<PartiallyObservedPlant>(plant).base : std::get<TimeVaryingPlant>(plant);
    expect(!design.stationary, "simulate_closed_loop: a finite-horizon plant requires a finite-horizon design");
    expect(design.partially_observed == is_po,
           "simulate_closed_loop: design observation mode does not match the plant");
    expect(design.horizon == base.horizon,
           "simulate_closed_loop: design horizon does not match the plant");
    expect(config.steps == base.horizon,
           "simulate_closed_loop: steps must equal the plant horizon for finite-horizon runs");
    const int T = base.horizon;
    plan.n = base.state_dim();
    plan.m = base.input_dim();
    expect(static_cast<int>(base.A.size()) == T && static_cast<int>(base.B.size()) == T &&
               static_cast<int>(base.W.size()) == T && static_cast<int>(base.Q.size()) == T &&
               static_cast<int>(base.R.size()) == T,
           "simulate_closed_loop: plant stage arrays must have length equal to the horizon");
    expect(static_cast<int>(design.bundle.K.size()) == T &&
               static_cast<int>(design.sensors.size()) == T &&
               static_cast<int>(design.L.size()) == T,
           "simulate_closed_loop: design stage arrays must have length equal to the horizon");
    plan.A.reserve(T);
    for (int i = 0; i < T; ++i) {
        plan.A.push_back(base.A[i]);
        plan.B.push_back(base.B[i]);
        plan.Wsqrt.push_back(psd_sqrt(base.W[i]));
        plan.Q.push_back(base.Q[i]);
        plan.R.push_back(base.R[i]);
        plan.K.push_back(design.bundle.K[i]);
        check_stage_matrices(plan, i);
        push_sensor_stage(plan, design.sensors[i], design.L[i]);
    }
    expect(base.P_init.rows() == plan.n && base.P_init.cols() == plan.n,
           "simulate_closed_loop: initial covariance dimensions do not match the plant");
    plan.init_state_sqrt = psd_sqrt(base.P_init);

    if (is_po) {
        const auto& pp = std::get<PartiallyObservedPlant>(plant);
        plan.po = true;
        plan.p = pp.output_dim();
        expect(plan.p > 0, "simulate_closed_loop: partially observed plant has an empty sensor");
        expect(design.prekf.has_value() &&
                   static_cast<int>(design.prekf->Ltilde.size()) >= T,
               "simulate_closed_loop: partially observed design is missing its forward filter");
        for (int t = 1; t <= T; ++t) {
            const Eigen::MatrixXd& H = pp.H_at(t);
            const Eigen::MatrixXd& G = pp.G_at(t);
            expect(H.rows() == plan.p && H.cols() == plan.n && G.rows() == plan.p,
                   "simulate_closed_loop: physical sensor dimensions are inconsistent");
            const Eigen::MatrixXd& Lt = design.prekf->Ltilde[t - 1];
            expect(Lt.rows() == plan.n && Lt.cols() == plan.p,
                   "simulate_closed_loop: forward filter gain dimensions are inconsistent");
            plan.H.push_back(H);
            plan.Gsqrt.push_back(psd_sqrt(G));
            plan.Ltilde.push_back(Lt);
        }
    }
    return plan;
}

/// Per-block partial sums for the per-stage sample moments.
struct BlockAccum {
    std::vector<Eigen::MatrixXd> err_sum;
    std::vector<Eigen::MatrixXd> innov_sum;
    std::vector<std::int64_t> stage_count;
    double max_norm = 0.0;
    int min_divergence = INT_MAX;
};

void init_accum(BlockAccum& acc, const LoopPlan& plan) {
    acc.err_sum.assign(plan.T, Eigen::MatrixXd::Zero(plan.n, plan.n));
    acc.innov_sum.reserve(plan.T);
    for (int i = 0; i < plan.T; ++i) {
        const int d = plan.po ? plan.p : static_cast<int>(plan.at(plan.C, i).rows());
        acc.innov_sum.push_back(Eigen::MatrixXd::Zero(d, d));
    }
    acc.stage_count.assign(plan.T, 0);
}

struct TrialStats {
    double cost = 0.0;
    double orthogonality = 0.0;
    std::array<double, 5> lag{};
    double max_norm = 0.0;
    int diverged_at = -1;  // 1-based stage, -1 if the trial completed
};

void append_row(std::string& out, int t, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                const Eigen::VectorXd& xhat) {
    char buf[40];
    out += std::to_string(t);
    const auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out += buf;
    };
    for (int i = 0; i < x.size(); ++i) put(x[i]);
    for (int j = 0; j < u.size(); ++j) put(u[j]);
    for (int i = 0; i < xhat.size(); ++i) put(xhat[i]);
    out += '\n';
}

TrialStats run_trial(const LoopPlan& plan, std::uint64_t seed, int trial, BlockAccum& acc,
                     std::string* trajectory) {
    GaussianStream noise(trial_stream_state(seed, trial));
    const int T = plan.T;
    const int n = plan.n;
    TrialStats stats;

    Eigen::VectorXd x(n);
    Eigen::VectorXd xhat_pred = Eigen::VectorXd::Zero(n);
    if (plan.stationary) {
        const Eigen::VectorXd est = plan.init_est_sqrt * noise.vector(n);
        x = est + plan.init_state_sqrt * noise.vector(n);
        xhat_pred = est;
    } else {
        x = plan.init_state_sqrt * noise.vector(n);
    }
    Eigen::VectorXd xtilde_pred = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd xtilde = Eigen::VectorXd::Zero(n);
    stats.max_norm = x.norm();
    if (!(stats.max_norm <= kDivergenceNorm)) {
        stats.diverged_at = 1;
        return stats;
    }

    // Innovation history for lag correlations: a ring buffer over the
    // subsequence of stages that actually produced a measurement.
    std::array<Eigen::VectorXd, 5> recent;
    int recent_count = 0;
    double auto0 = 0.0;
    std::int64_t count0 = 0;
    std::array<double, 5> autol{};
    std::array<std::int64_t, 5> countl{};

    double cost_acc = 0.0;
    double orth_acc = 0.0;
    int stages_recorded = 0;

    for (int i = 0; i < T; ++i) {
        const Eigen::MatrixXd& A = plan.at(plan.A, i);
        const Eigen::MatrixXd& B = plan.at(plan.B, i);
        const Eigen::MatrixXd& Q = plan.at(plan.Q, i);

        Eigen::VectorXd innovation;
        bool have_innovation = false;
        if (plan.po) {
            const Eigen::MatrixXd& H = plan.H[i];
            const Eigen::VectorXd yp = H * x + plan.Gsqrt[i] * noise.vector(plan.p);
            innovation = yp - H * xtilde_pred;
            have_innovation = true;
            xtilde = xtilde_pred + plan.Ltilde[i] * innovation;
        }
        const Eigen::VectorXd& sensed = plan.po ? xtilde : x;

        const Eigen::MatrixXd& C = plan.at(plan.C, i);
        const int r = static_cast<int>(C.rows());
        Eigen::VectorXd xhat = xhat_pred;
        if (r > 0) {
            const Eigen::VectorXd y = C * sensed + plan.at(plan.Vsqrt, i) * noise.vector(r);
            const Eigen::VectorXd nu = y - C * xhat_pred;
            xhat += plan.at(plan.L, i) * nu;
            if (!plan.po) {
                innovation = nu;
                have_innovation = true;
            }
        }

        const Eigen::VectorXd err = sensed - xhat;
        acc.err_sum[i].noalias() += err * err.transpose();
        if (have_innovation) acc.innov_sum[i].noalias() += innovation * innovation.transpose();
        ++acc.stage_count[i];
        orth_acc += xhat.dot(Q * (x - xhat));
        ++stages_recorded;

        if (have_innovation) {
            auto0 += innovation.squaredNorm();
            ++count0;
            const int available = std::min(recent_count, 5);
            for (int lag = 1; lag <= available; ++lag) {
                const Eigen::VectorXd& prev = recent[(recent_count - lag) % 5];
                if (prev.size() == innovation.size()) {
                    autol[lag - 1] += innovation.dot(prev);
                    ++countl[lag - 1];
                }
            }
            recent[recent_count % 5] = innovation;
            ++recent_count;
        }

        const Eigen::VectorXd u = plan.at(plan.K, i) * xhat;
        if (trajectory != nullptr) append_row(*trajectory, i + 1, x, u, xhat);

        const Eigen::VectorXd w = plan.at(plan.Wsqrt, i) * noise.vector(n);
        const Eigen::VectorXd x_next = A * x + B * u + w;
        cost_acc += x_next.dot(Q * x_next) + u.dot(plan.at(plan.R, i) * u);
        xhat_pred = A * xhat + B * u;
        if (plan.po) xtilde_pred = A * xtilde + B * u;
        x = x_next;

        const double norm = x.norm();
        stats.max_norm = std::max(stats.max_norm, norm);
        if (!(norm <= kDivergenceNorm)) {  // also catches NaN/Inf
            stats.diverged_at = i + 2;     // the successor state x_{t+1} diverged
            break;
        }
    }

    stats.cost = cost_acc / static_cast<double>(T);
    stats.orthogonality = stages_recorded > 0 ? orth_acc / static_cast<double>(stages_recorded) : 0.0;
    for (int lag = 0; lag < 5; ++lag) {
        if (countl[lag] > 0 && auto0 > 0.0) {
            const double mean_lag = autol[lag] / static_cast<double>(countl[lag]);
            const double mean_zero = auto0 / static_cast<double>(count0);
            stats.lag[lag] = mean_lag / mean_zero;
        }
    }
    return stats;
}

std::string trajectory_header(int n, int m) {
    std::string header = "t";
    for (int i = 0; i < n; ++i) header += ",x[" + std::to_string(i) + "]";
    for (int j = 0; j < m; ++j) header += ",u[" + std::to_string(j) + "]";
    for (int i = 0; i < n; ++i) header += ",xhat[" + std::to_string(i) + "]";
    header += '\n';
    return header;
}

}  // namespace

SimResult simulate_closed_loop(const SynthesisDesign& design, const PlantModel& plant,
                               const SimConfig& config) {
    expect(config.steps >= 1, "simulate_closed_loop: steps must be at least 1");
    expect(config.trials >= 1, "simulate_closed_loop: trials must be at least 1");
    expect(static_cast<double>(config.steps) * static_cast<double>(config.trials) <=
               config.max_stage_samples,
           "simulate_closed_loop: steps * trials exceeds the stage-sample cap");

    const LoopPlan plan = make_plan(design, plant, config);

    SimResult result;
    result.steps = plan.T;
    result.trials = config.trials;
    result.state_dim = plan.n;
    result.input_dim = plan.m;
    result.trial_costs.resize(config.trials);
    result.trial_orthogonality.resize(config.trials);
    result.trial_lag_correlations.resize(config.trials);

    const int nblocks = (config.trials + kTrialBlock - 1) / kTrialBlock;
    std::vector<BlockAccum> blocks(nblocks);
    const bool want_trajectory = !config.trajectory_path.empty();
    std::string trajectory;
    if (want_trajectory) trajectory = trajectory_header(plan.n, plan.m);

    const auto run_block = [&](int b) {
        BlockAccum& acc = blocks[b];
        init_accum(acc, plan);
        const int lo = b * kTrialBlock;
        const int hi = std::min(config.trials, lo + kTrialBlock);
        for (int k = lo; k < hi; ++k) {
            std::string* traj = (want_trajectory && k == 0) ? &trajectory : nullptr;
            const TrialStats stats = run_trial(plan, config.seed, k, acc, traj);
            result.trial_costs[k] = stats.cost;
            result.trial_orthogonality[k] = stats.orthogonality;
            result.trial_lag_correlations[k] = stats.lag;
            acc.max_norm = std::max(acc.max_norm, stats.max_norm);
            if (stats.diverged_at > 0)
                acc.min_divergence = std::min(acc.min_divergence, stats.diverged_at);
        }
    };

    const int nthreads = std::clamp(config.threads, 1, nblocks);
    if (nthreads <= 1) {
        for (int b = 0; b < nblocks; ++b) run_block(b);
    } else {
        std::atomic<int> next_block{0};
        std::vector<std::thread> workers;
        workers.reserve(nthreads);
        for (int w = 0; w < nthreads; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    const int b = next_block.fetch_add(1);
                    if (b >= nblocks) break;
                    run_block(b);
                }
            });
        }
        for (auto& worker : workers) worker.join();
    }

    result.sample_filter_covariances.reserve(plan.T);
    result.innovation_sample_covariances.reserve(plan.T);
    for (int i = 0; i < plan.T; ++i) {
        Eigen::MatrixXd err_total = Eigen::MatrixXd::Zero(plan.n, plan.n);
        Eigen::MatrixXd innov_total = Eigen::MatrixXd::Zero(blocks[0].innov_sum[i].rows(),
                                                            blocks[0].innov_sum[i].cols());
        std::int64_t count = 0;
        for (const BlockAccum& acc : blocks) {
            err_total += acc.err_sum[i];
            innov_total += acc.innov_sum[i];
            count += acc.stage_count[i];
        }
        const double denom = count > 0 ? static_cast<double>(count) : 1.0;
        result.sample_filter_covariances.push_back(err_total / denom);
        result.innovation_sample_covariances.push_back(innov_total / denom);
    }
    for (const BlockAccum& acc : blocks) {
        result.max_state_norm = std::max(result.max_state_norm, acc.max_norm);
        if (acc.min_divergence != INT_MAX) {
            result.diverged = true;
            result.divergence_stage = result.divergence_stage < 0
                                          ? acc.min_divergence
                                          : std::min(result.divergence_stage, acc.min_divergence);
        }
    }

    if (want_trajectory) {
        std::ofstream out(config.trajectory_path);
        out << trajectory;
        out.flush();
        if (!out)
            throw std::runtime_error("simulate_closed_loop: cannot write trajectory file " +
                                     config.trajectory_path.string());
    }
    return result;
}

std::pair<double, double> empirical_cost(const SimResult& result) {
    if (result.trials < 2)
        throw std::invalid_argument("empirical_cost: at least two trials are required for a standard error");
    return mean_and_stderr(result.trial_costs);
}

OrthogonalityReport orthogonality_check(const SimResult& result, const SynthesisDesign& design) {
    if (result.trials < 2)
        throw std::invalid_argument("orthogonality_check: at least two trials are required");
    if (design.bundle.K.empty() || design.bundle.K[0].cols() != result.state_dim)
        throw std::invalid_argument("orthogonality_check: design does not match the simulated system");
    OrthogonalityReport report;
    const auto [mean, se] = mean_and_stderr(result.trial_orthogonality);
    report.estimate = mean;
    report.std_error = se;
    report.pass = std::abs(mean) <= 4.0 * se;
    return report;
}

WhitenessReport whiteness_check(const SimResult& result) {
    if (result.trials < 2)
        throw std::invalid_argument("whiteness_check: at least two trials are required");
    WhitenessReport report;
    report.pass = true;
    std::vector<double> column(result.trials);
    for (int lag = 0; lag < 5; ++lag) {
        for (int k = 0; k < result.trials; ++k) column[k] = result.trial_lag_correlations[k][lag];
        const auto [mean, se] = mean_and_stderr(column);
        report.correlation[lag] = mean;
        report.band[lag] = 1.96 * se;
        if (std::abs(mean) > report.band[lag]) report.pass = false;
    }
    return report;
}

}  // namespace ratelqg
