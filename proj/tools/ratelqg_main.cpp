#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ratelqg/errors.hpp"
#include "ratelqg/model.hpp"
#include "ratelqg/simulator.hpp"
#include "ratelqg/synthesis.hpp"

namespace {

using nlohmann::ordered_json;
using namespace ratelqg;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Worker cap from the environment; absent or malformed values mean serial.
int env_threads() {
    const char* raw = std::getenv("RATELQG_THREADS");
    if (raw == nullptr) return 1;
    char* end = nullptr;
    const long value = std::strtol(raw, &end, 10);
    if (end == raw || value < 1) return 1;
    return static_cast<int>(std::min(value, 256L));
}

SynthesisDesign synthesize_any(const PlantModel& plant, double budget,
                               const SynthesisOptions& options) {
    if (std::holds_alternative<StationaryPlant>(plant))
        return synthesize_stationary(std::get<StationaryPlant>(plant), budget, options);
    if (std::holds_alternative<TimeVaryingPlant>(plant))
        return synthesize_tv(std::get<TimeVaryingPlant>(plant), budget, options);
    return synthesize_po(std::get<PartiallyObservedPlant>(plant), budget, options);
}

std::string render_curve(const TradeoffCurve& curve) {
    std::string out;
    out += "# asymptote_bits = " + fmt(curve.asymptote_bits) + "\n";
    out += "# Dmin = " + fmt(curve.Dmin) + "\n";
    out += "D,DI_bits,rank,R_upper_bits,feasible\n";
    for (const TradeoffSample& s : curve.samples) {
        if (s.feasible) {
            out += fmt(s.D) + "," + fmt(s.DI_bits) + "," + std::to_string(s.rank) + "," +
                   fmt(s.R_upper_bits) + ",1\n";
        } else {
            out += fmt(s.D) + ",,,,0\n";
        }
    }
    return out;
}

/// Writes to the chosen file, or to stdout when no path was given.
void write_output(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    out << text;
    out.flush();
    if (!out) throw std::invalid_argument("cannot write output file " + path);
}

struct CommonFlags {
    std::string plant_path;
    std::string out_path;
    double tolerance = 1e-7;
    double rank_threshold = 1e-3;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_solver_knobs) {
    cmd->add_option("--plant", flags.plant_path, "plant description file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", flags.out_path, "output file (stdout when omitted)");
    if (with_solver_knobs) {
        cmd->add_option("--tolerance", flags.tolerance, "solver duality-gap tolerance")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--rank-threshold", flags.rank_threshold,
                        "relative eigenvalue cut for sensor rank selection")
            ->check(CLI::PositiveNumber);
    }
}

SynthesisOptions make_options(const CommonFlags& flags) {
    SynthesisOptions options;
    options.solver.tolerance = flags.tolerance;
    options.rank_threshold = flags.rank_threshold;
    options.threads = env_threads();
    return options;
}

int run_synthesize(const CommonFlags& flags, double budget) {
    const PlantModel plant = load_plant(flags.plant_path);
    const SynthesisDesign design = synthesize_any(plant, budget, make_options(flags));
    std::string text = serialize_design(design);
    if (text.empty() || text.back() != '\n') text += '\n';
    write_output(text, flags.out_path);
    return 0;
}

int run_tradeoff(const CommonFlags& flags, double dmin, double dmax, int points) {
    if (dmax < dmin) throw std::invalid_argument("--dmax must not be below --dmin");
    const PlantModel plant = load_plant(flags.plant_path);
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i)
        grid[i] = points == 1 ? dmin : dmin + (dmax - dmin) * i / (points - 1);
    if (points > 1) grid.back() = dmax;
    const TradeoffCurve curve = tradeoff_curve(plant, grid, make_options(flags));
    write_output(render_curve(curve), flags.out_path);
    return 0;
}

int run_simulate(const CommonFlags& flags, double budget, int steps, int trials,
                 std::uint64_t seed) {
    if (trials < 2) throw std::invalid_argument("--trials must be at least 2");
    const PlantModel plant = load_plant(flags.plant_path);
    const SynthesisDesign design = synthesize_any(plant, budget, make_options(flags));

    SimConfig config;
    config.trials = trials;
    config.seed = seed;
    config.threads = env_threads();
    if (steps > 0) {
        config.steps = steps;
    } else {
        config.steps = design.stationary ? 1000 : design.horizon;
    }
    const SimResult result = simulate_closed_loop(design, plant, config);
    const auto [cost_mean, cost_se] = empirical_cost(result);
    const OrthogonalityReport orth = orthogonality_check(result, design);
    const WhitenessReport white = whiteness_check(result);

    ordered_json report;
    report["budget"] = budget;
    report["DI_bits"] = design.DI_bits;
    report["analytic_cost"] = design.J_analytic;
    report["steps"] = result.steps;
    report["trials"] = result.trials;
    report["seed"] = seed;
    report["empirical_cost"] = {{"mean", cost_mean}, {"stderr", cost_se}};
    report["max_state_norm"] = result.max_state_norm;
    report["diverged"] = result.diverged;
    report["divergence_stage"] = result.divergence_stage;
    report["orthogonality"] = {
        {"estimate", orth.estimate}, {"std_error", orth.std_error}, {"pass", orth.pass}};
    report["whiteness"] = {{"correlation", white.correlation}, {"band", white.band},
                           {"pass", white.pass}};
    write_output(report.dump(2) + "\n", flags.out_path);
    return 0;
}

int run_asymptote(const CommonFlags& flags) {
    const PlantModel plant = load_plant(flags.plant_path);
    double bits = 0.0;  // finite-horizon plants have no stabilization floor
    if (std::holds_alternative<StationaryPlant>(plant))
        bits = data_rate_asymptote(std::get<StationaryPlant>(plant).A);
    ordered_json report;
    report["asymptote_bits"] = bits;
    write_output(report.dump(2) + "\n", flags.out_path);
    return 0;
}

std::string single_line(const char* what) {
    std::string text = what;
    std::replace(text.begin(), text.end(), '\n', ' ');
    return text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"minimum-rate LQG controller synthesis"};
    app.require_subcommand(1);

    CommonFlags synth_flags;
    double synth_budget = 0.0;
    CLI::App* synth = app.add_subcommand("synthesize", "design a controller for one budget");
    add_common(synth, synth_flags, true);
    synth->add_option("--budget", synth_budget, "control cost budget D")
        ->required()
        ->check(CLI::PositiveNumber);

    CommonFlags trade_flags;
    double dmin = 0.0, dmax = 0.0;
    int points = 0;
    CLI::App* trade = app.add_subcommand("tradeoff", "sweep the rate/cost trade-off curve");
    add_common(trade, trade_flags, true);
    trade->add_option("--dmin", dmin, "smallest budget")->required()->check(CLI::PositiveNumber);
    trade->add_option("--dmax", dmax, "largest budget")->required()->check(CLI::PositiveNumber);
    trade->add_option("--points", points, "grid size")->required()->check(CLI::PositiveNumber);

    CommonFlags sim_flags;
    double sim_budget = 0.0;
    int sim_steps = 0;
    int sim_trials = 100;
    std::uint64_t sim_seed = 0;
    CLI::App* sim = app.add_subcommand("simulate", "synthesize and run the closed loop");
    add_common(sim, sim_flags, true);
    sim->add_option("--budget", sim_budget, "control cost budget D")
        ->required()
        ->check(CLI::PositiveNumber);
    sim->add_option("--steps", sim_steps, "stages per trial (default: horizon, or 1000)");
    sim->add_option("--trials", sim_trials, "independent trials");
    sim->add_option("--seed", sim_seed, "random seed");

    CommonFlags asym_flags;
    CLI::App* asym = app.add_subcommand("asymptote", "print the minimum stabilizing rate");
    add_common(asym, asym_flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "invalid input: " << single_line(e.what()) << "\n";
        return 3;
    }

    try {
        if (synth->parsed()) return run_synthesize(synth_flags, synth_budget);
        if (trade->parsed()) return run_tradeoff(trade_flags, dmin, dmax, points);
        if (sim->parsed()) return run_simulate(sim_flags, sim_budget, sim_steps, sim_trials, sim_seed);
        return run_asymptote(asym_flags);
    } catch (const InfeasibleBudget& e) {
        std::cerr << "infeasible budget: " << single_line(e.what()) << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << single_line(e.what()) << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << single_line(e.what()) << "\n";
        return 4;
    }
}
