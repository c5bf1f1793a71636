#include "ratelqg/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "ratelqg/errors.hpp"
#include "ratelqg/matrix_util.hpp"

namespace ratelqg {

namespace {

using nlohmann::ordered_json;

std::string budget_message(double D, double floor_value) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "budget %.12g does not exceed the achievable cost floor (floor = %.12g)", D,
                  floor_value);
    return buf;
}

/// Runs the barrier solver and maps failed outcomes onto the library's
/// exception taxonomy.
MaxDetSolution solve_or_raise(const MaxDetProblem& problem, double D,
                              const SolverSettings& settings) {
    MaxDetSolution solution = solve(problem, settings);
    if (solution.status == SolveStatus::optimal) return solution;
    if (solution.status == SolveStatus::infeasible) {
        throw InfeasibleBudget(budget_message(D, problem.budget_floor), problem.budget_floor);
    }
    throw SolverFailure("covariance program failed: " + solution.message);
}

/// Filter/prediction schedule assembled from the solver's covariance blocks
/// (the first `horizon` variables) and the plant's one-step recursion.
CovarianceSchedule schedule_from_solution(const std::vector<Eigen::MatrixXd>& values,
                                          const TimeVaryingPlant& plant) {
    const int T = plant.horizon;
    CovarianceSchedule schedule;
    schedule.P_filt.reserve(T);
    schedule.P_pred.reserve(T);
    for (int t = 0; t < T; ++t) schedule.P_filt.push_back(symmetrized(values[t]));
    schedule.P_pred.push_back(plant.P_init);
    for (int t = 1; t < T; ++t) {
        schedule.P_pred.push_back(symmetrized(
            plant.A[t - 1] * schedule.P_filt[t - 1] * plant.A[t - 1].transpose() + plant.W[t - 1]));
    }
    return schedule;
}

/// Factors every stage's information gain into a sensor and computes the
/// matching measurement-update gains. A stage whose entire gain would move
/// the rate by less than ~1e-6 nats is solver residue around a zero-rate
/// optimum, not signal; it is realized without a sensor so that budgets
/// admitting zero rate come out with rank 0.
void realize_sensors(SynthesisDesign& design, double rank_threshold) {
    const std::vector<Eigen::MatrixXd> SNR = snr_from_schedule(design.schedule);
    design.sensors.clear();
    design.L.clear();
    design.sensors.reserve(SNR.size());
    design.L.reserve(SNR.size());
    for (std::size_t t = 0; t < SNR.size(); ++t) {
        const double contribution = (SNR[t] * design.schedule.P_pred[t]).trace();
        if (contribution <= 1e-6) {
            SensorDesign none;
            none.SNR = SNR[t];
            none.C = Eigen::MatrixXd(0, SNR[t].rows());
            none.V = Eigen::MatrixXd(0, 0);
            design.sensors.push_back(std::move(none));
        } else {
            design.sensors.push_back(factor_snr(SNR[t], rank_threshold));
        }
        design.L.push_back(kalman_gain(design.schedule.P_pred[t], design.sensors.back().C,
                                       design.sensors.back().V));
    }
}

void require_valid(const ValidationReport& report) {
    if (!report.ok()) throw std::invalid_argument("plant validation failed: " + report.joined());
}

ordered_json write_matrix(const Eigen::MatrixXd& M) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

ordered_json write_matrix_list(const std::vector<Eigen::MatrixXd>& list) {
    ordered_json out = ordered_json::array();
    for (const auto& M : list) out.push_back(write_matrix(M));
    return out;
}

}  // namespace

SynthesisDesign synthesize_tv(const TimeVaryingPlant& plant, double D,
                              const SynthesisOptions& options) {
    TimeVaryingPlant local = plant;
    require_valid(validate_tv_plant(local));

    SynthesisDesign design;
    design.bundle = backward_riccati(local);
    const MaxDetProblem problem = needs_singular_form(local.W)
                                      ? build_tv_singular_problem(local, design.bundle, D)
                                      : build_tv_problem(local, design.bundle, D);
    const MaxDetSolution solution = solve_or_raise(problem, D, options.solver);

    design.schedule = schedule_from_solution(solution.values, local);
    realize_sensors(design, options.rank_threshold);
    design.DI_bits = directed_info_analytic(design.schedule, local.A, local.W);
    design.J_analytic = cost_analytic(design.bundle, design.schedule, local);
    design.D_requested = D;
    design.gap_estimate = solution.gap_estimate;
    design.horizon = local.horizon;
    return design;
}

SynthesisDesign synthesize_stationary(const StationaryPlant& plant, double D,
                                      const SynthesisOptions& options) {
    StationaryPlant local = plant;
    require_valid(validate_stationary(local));

    SynthesisDesign design;
    design.stationary = true;
    design.bundle = solve_are(local);
    const MaxDetProblem problem = build_stationary_problem(local, design.bundle, D);
    const MaxDetSolution solution = solve_or_raise(problem, D, options.solver);

    const Eigen::MatrixXd P = symmetrized(solution.values[0]);
    design.schedule.P_filt = {P};
    design.schedule.P_pred = {symmetrized(local.A * P * local.A.transpose() + local.W)};
    realize_sensors(design, options.rank_threshold);
    design.DI_bits = directed_info_analytic(design.schedule, {local.A}, {local.W});
    design.J_analytic = cost_analytic(design.bundle, design.schedule, local);
    design.D_requested = D;
    design.gap_estimate = solution.gap_estimate;
    return design;
}

SynthesisDesign synthesize_po(const PartiallyObservedPlant& plant, double D,
                              const SynthesisOptions& options) {
    PartiallyObservedPlant local = plant;
    require_valid(validate_po_plant(local));

    SynthesisDesign design;
    design.partially_observed = true;
    design.prekf = prekf_design(local);
    design.bundle = backward_riccati(local.base);
    const MaxDetProblem problem = build_po_problem(local, design.bundle, *design.prekf, D);
    const MaxDetSolution solution = solve_or_raise(problem, D, options.solver);

    const POReduction reduction = reduce_po_plant(local, *design.prekf);
    design.schedule = schedule_from_solution(solution.values, reduction.reduced);
    realize_sensors(design, options.rank_threshold);
    design.DI_bits =
        directed_info_analytic(design.schedule, reduction.reduced.A, reduction.reduced.W);
    design.J_analytic = cost_analytic(design.bundle, design.schedule, reduction.reduced) +
                        reduction.cost_offset;
    design.D_requested = D;
    design.gap_estimate = solution.gap_estimate;
    design.horizon = local.base.horizon;
    return design;
}

double directed_info_analytic(const CovarianceSchedule& schedule,
                              const std::vector<Eigen::MatrixXd>& A,
                              const std::vector<Eigen::MatrixXd>& noise) {
    const std::size_t stages = schedule.P_filt.size();
    if (stages == 0 || schedule.P_pred.size() != stages) {
        throw std::invalid_argument(
            "covariance schedule: P_filt and P_pred must be nonempty and equally long");
    }
    const Eigen::Index n = schedule.P_filt[0].rows();
    for (std::size_t t = 0; t < stages; ++t) {
        if (schedule.P_filt[t].rows() != n || schedule.P_filt[t].cols() != n ||
            schedule.P_pred[t].rows() != n || schedule.P_pred[t].cols() != n) {
            throw std::invalid_argument("covariance schedule: inconsistent block dimensions");
        }
    }
    if (A.size() + 1 < stages || noise.size() + 1 < stages) {
        throw std::invalid_argument(
            "covariance schedule: need dynamics and noise for every prediction step");
    }
    for (std::size_t t = 1; t < stages; ++t) {
        if (A[t - 1].rows() != n || A[t - 1].cols() != n || noise[t - 1].rows() != n ||
            noise[t - 1].cols() != n) {
            throw std::invalid_argument("covariance schedule: dynamics dimensions do not match");
        }
        const Eigen::MatrixXd expected = symmetrized(
            A[t - 1] * schedule.P_filt[t - 1] * A[t - 1].transpose() + noise[t - 1]);
        const double scale = 1.0 + expected.lpNorm<Eigen::Infinity>();
        if ((expected - schedule.P_pred[t]).lpNorm<Eigen::Infinity>() > 1e-10 * scale) {
            throw std::invalid_argument(
                "covariance schedule: prediction recursion violated entering stage " +
                std::to_string(t + 1));
        }
    }
    double nats = 0.0;
    for (std::size_t t = 0; t < stages; ++t) {
        nats += 0.5 * (logdet_pd(schedule.P_pred[t]) - logdet_pd(schedule.P_filt[t]));
    }
    return nats / std::numbers::ln2;
}

double cost_analytic(const RiccatiBundle& bundle, const CovarianceSchedule& schedule,
                     const TimeVaryingPlant& plant) {
    const std::size_t T = static_cast<std::size_t>(plant.horizon);
    if (T == 0 || bundle.S.size() != T || bundle.Theta.size() != T || bundle.Phi.size() != T) {
        throw std::invalid_argument("cost evaluation: gain bundle does not match the horizon");
    }
    if (schedule.P_filt.size() != T || schedule.P_pred.size() != T) {
        throw std::invalid_argument("cost evaluation: schedule does not match the horizon");
    }
    double J = (bundle.Phi[0] * schedule.P_pred[0]).trace();
    for (std::size_t t = 0; t < T; ++t) {
        J += (plant.W[t] * bundle.S[t]).trace() + (bundle.Theta[t] * schedule.P_filt[t]).trace();
    }
    return J;
}

double cost_analytic(const RiccatiBundle& bundle, const CovarianceSchedule& schedule,
                     const StationaryPlant& plant) {
    if (bundle.S.size() != 1 || bundle.Theta.size() != 1) {
        throw std::invalid_argument("cost evaluation: expected a stationary gain bundle");
    }
    if (schedule.P_filt.size() != 1) {
        throw std::invalid_argument("cost evaluation: expected a single-entry schedule");
    }
    return (plant.W * bundle.S[0]).trace() + (bundle.Theta[0] * schedule.P_filt[0]).trace();
}

double data_rate_asymptote(const Eigen::Ref<const Eigen::MatrixXd>& A) {
    if (A.rows() == 0 || A.rows() != A.cols()) {
        throw std::invalid_argument("data_rate_asymptote: A must be square and nonempty");
    }
    const Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    if (es.info() != Eigen::Success) {
        throw SolverFailure("data_rate_asymptote: eigenvalue iteration failed");
    }
    double bits = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const double mag = std::abs(es.eigenvalues()[i]);
        if (mag >= 1.0) bits += std::log2(mag);
    }
    return bits;
}

OperationalBounds operational_bounds(double DI_bits, int rank) {
    if (rank < 0) throw std::invalid_argument("operational_bounds: rank must be nonnegative");
    OperationalBounds bounds;
    bounds.lower_bits = DI_bits;
    const double per_dim = std::log2(4.0 * std::numbers::pi * std::numbers::e / 12.0);
    bounds.upper_bits = DI_bits + 0.5 * rank * per_dim + 1.0;
    return bounds;
}

namespace {

struct CurveProbe {
    double floor = 0.0;
    double asymptote_bits = 0.0;
};

/// Validates the plant once and extracts the budget floor (and, for
/// stationary plants, the stabilization asymptote) without solving anything.
CurveProbe probe_curve(const PlantModel& plant, double D0) {
    CurveProbe probe;
    if (const auto* sp = std::get_if<StationaryPlant>(&plant)) {
        StationaryPlant local = *sp;
        require_valid(validate_stationary(local));
        const RiccatiBundle bundle = solve_are(local);
        probe.floor = build_stationary_problem(local, bundle, D0).budget_floor;
        probe.asymptote_bits = data_rate_asymptote(local.A);
    } else if (const auto* tp = std::get_if<TimeVaryingPlant>(&plant)) {
        TimeVaryingPlant local = *tp;
        require_valid(validate_tv_plant(local));
        const RiccatiBundle bundle = backward_riccati(local);
        probe.floor = (needs_singular_form(local.W)
                           ? build_tv_singular_problem(local, bundle, D0)
                           : build_tv_problem(local, bundle, D0))
                          .budget_floor;
    } else {
        PartiallyObservedPlant local = std::get<PartiallyObservedPlant>(plant);
        require_valid(validate_po_plant(local));
        const PreKFDesign prekf = prekf_design(local);
        const RiccatiBundle bundle = backward_riccati(local.base);
        probe.floor = build_po_problem(local, bundle, prekf, D0).budget_floor;
    }
    return probe;
}

SynthesisDesign dispatch_synthesis(const PlantModel& plant, double D,
                                   const SynthesisOptions& options) {
    if (const auto* sp = std::get_if<StationaryPlant>(&plant)) {
        return synthesize_stationary(*sp, D, options);
    }
    if (const auto* tp = std::get_if<TimeVaryingPlant>(&plant)) {
        return synthesize_tv(*tp, D, options);
    }
    return synthesize_po(std::get<PartiallyObservedPlant>(plant), D, options);
}

}  // namespace

TradeoffCurve tradeoff_curve(const PlantModel& plant, const std::vector<double>& D_grid,
                             const SynthesisOptions& options) {
    if (D_grid.empty()) throw std::invalid_argument("tradeoff grid must not be empty");
    for (std::size_t i = 0; i < D_grid.size(); ++i) {
        if (!(D_grid[i] > 0.0)) {
            throw std::invalid_argument("tradeoff grid entries must be strictly positive");
        }
        if (i > 0 && D_grid[i] < D_grid[i - 1]) {
            throw std::invalid_argument("tradeoff grid must be sorted ascending");
        }
    }

    const CurveProbe probe = probe_curve(plant, D_grid.front());
    TradeoffCurve curve;
    curve.asymptote_bits = probe.asymptote_bits;
    curve.Dmin = probe.floor;
    curve.samples.assign(D_grid.size(), TradeoffSample{});

    SynthesisOptions point_options = options;
    point_options.threads = 1;

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < D_grid.size(); i = next.fetch_add(1)) {
            TradeoffSample sample;
            sample.D = D_grid[i];
            sample.DI_bits = std::numeric_limits<double>::quiet_NaN();
            sample.R_upper_bits = std::numeric_limits<double>::quiet_NaN();
            try {
                const SynthesisDesign design = dispatch_synthesis(plant, D_grid[i], point_options);
                int rank = 0;
                for (const auto& sensor : design.sensors) rank = std::max(rank, sensor.rank);
                sample.DI_bits = design.DI_bits;
                sample.rank = rank;
                sample.R_upper_bits = operational_bounds(design.DI_bits, rank).upper_bits;
                sample.feasible = true;
            } catch (const InfeasibleBudget&) {
            } catch (const SolverFailure&) {
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
            curve.samples[i] = sample;
        }
    };

    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.threads)),
                              D_grid.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return curve;
}

std::string serialize_design(const SynthesisDesign& design) {
    ordered_json j;
    if (design.stationary) {
        if (design.bundle.K.size() != 1 || design.sensors.size() != 1 || design.L.size() != 1 ||
            design.schedule.P_filt.size() != 1 || design.schedule.P_pred.size() != 1) {
            throw std::invalid_argument("serialize_design: malformed stationary design");
        }
        j["K"] = write_matrix(design.bundle.K[0]);
        j["C"] = write_matrix(design.sensors[0].C);
        j["V"] = write_matrix(design.sensors[0].V);
        j["L"] = write_matrix(design.L[0]);
        j["P_filt"] = write_matrix(design.schedule.P_filt[0]);
        j["P_pred"] = write_matrix(design.schedule.P_pred[0]);
        j["DI_bits"] = design.DI_bits;
        j["J"] = design.J_analytic;
        j["rank"] = design.sensors[0].rank;
    } else {
        const std::size_t T = static_cast<std::size_t>(design.horizon);
        if (T == 0 || design.bundle.K.size() != T || design.sensors.size() != T ||
            design.L.size() != T || design.schedule.P_filt.size() != T ||
            design.schedule.P_pred.size() != T) {
            throw std::invalid_argument("serialize_design: malformed finite-horizon design");
        }
        ordered_json C = ordered_json::array();
        ordered_json V = ordered_json::array();
        ordered_json ranks = ordered_json::array();
        for (const auto& sensor : design.sensors) {
            C.push_back(write_matrix(sensor.C));
            V.push_back(write_matrix(sensor.V));
            ranks.push_back(sensor.rank);
        }
        j["K"] = write_matrix_list(design.bundle.K);
        j["C"] = C;
        j["V"] = V;
        j["L"] = write_matrix_list(design.L);
        j["P_filt"] = write_matrix_list(design.schedule.P_filt);
        j["P_pred"] = write_matrix_list(design.schedule.P_pred);
        j["DI_bits"] = design.DI_bits;
        j["J"] = design.J_analytic;
        j["rank"] = ranks;
    }
    if (design.prekf) {
        j["Ltilde"] = write_matrix_list(design.prekf->Ltilde);
        j["Psi"] = write_matrix_list(design.prekf->Psi);
    }
    return j.dump(2) + "\n";
}

void save_design(const SynthesisDesign& design, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write design file: " + path.string());
    out << serialize_design(design);
    out.flush();
    if (!out.good()) throw std::runtime_error("cannot write design file: " + path.string());
}

}  // namespace ratelqg
