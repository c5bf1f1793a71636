#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ratelqg/errors.hpp"
#include "ratelqg/model.hpp"
#include "ratelqg/synthesis.hpp"

using namespace ratelqg;
using Catch::Approx;
using nlohmann::json;

namespace {

const std::string kCli = RATELQG_CLI_PATH;
const std::string kData = RATELQG_DATA_DIR;

std::filesystem::path tmp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "ratelqg_cli_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

/// Runs the CLI with the given arguments (optionally under an environment
/// prefix), redirecting stdout/stderr to files, and returns the exit code.
int run_cli(const std::string& args, const std::string& stdout_file = "/dev/null",
            const std::string& stderr_file = "/dev/null", const std::string& env_prefix = "") {
    std::string cmd = env_prefix + "\"" + kCli + "\" " + args + " > " + stdout_file + " 2> " +
                      stderr_file;
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

int count_lines(const std::string& text) {
    int lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::stringstream stream(line);
    std::string field;
    while (std::getline(stream, field, sep)) fields.push_back(field);
    return fields;
}

}  // namespace

TEST_CASE("synthesize writes a parseable design and is byte-stable") {
    const auto dir = tmp_dir();
    const auto out1 = dir / "design80a.json";
    const auto out2 = dir / "design80b.json";
    const auto out3 = dir / "design80_stdout.json";
    const std::string plant = kData + "/bench4_stationary.json";

    REQUIRE(run_cli("synthesize --plant \"" + plant + "\" --budget 80 --out " + out1.string()) == 0);
    REQUIRE(run_cli("synthesize --plant \"" + plant + "\" --budget 80 --out " + out2.string()) == 0);
    REQUIRE(run_cli("synthesize --plant \"" + plant + "\" --budget 80", out3.string()) == 0);

    const std::string text = slurp(out1);
    CHECK(text == slurp(out2));   // identical invocation, identical bytes
    CHECK(text == slurp(out3));   // --out and stdout produce the same rendering

    const json design = json::parse(text);
    CHECK(design.at("DI_bits").get<double>() == Approx(1.602).margin(0.02));
    CHECK(design.at("rank").get<int>() == 1);
    CHECK(design.contains("K"));
    CHECK(design.contains("C"));
    CHECK(design.contains("V"));
    CHECK(design.contains("L"));
}

TEST_CASE("partially observed plants synthesize through the CLI") {
    const auto dir = tmp_dir();
    const auto out = dir / "design_po.json";
    const std::string plant_path = kData + "/scalar_po.json";

    // Pick a clearly feasible budget directly from the library's floor probe.
    double floor = 0.0;
    try {
        synthesize_po(std::get<PartiallyObservedPlant>(load_plant(plant_path)), 1e-9);
    } catch (const InfeasibleBudget& e) {
        floor = e.floor;
    }
    REQUIRE(floor > 0.0);
    const double budget = 1.3 * floor;

    REQUIRE(run_cli("synthesize --plant \"" + plant_path + "\" --budget " +
                    std::to_string(budget) + " --out " + out.string()) == 0);
    const json design = json::parse(slurp(out));
    CHECK(design.contains("Ltilde"));
    CHECK(design.contains("Psi"));
    CHECK(design.at("DI_bits").get<double>() > 0.0);
}

TEST_CASE("invalid inputs exit with code 3 and one diagnostic line") {
    const auto dir = tmp_dir();
    const auto errfile = dir / "stderr.txt";
    const std::string plant = kData + "/bench4_stationary.json";

    SECTION("negative budget") {
        CHECK(run_cli("synthesize --plant \"" + plant + "\" --budget -1", "/dev/null",
                      errfile.string()) == 3);
        const std::string err = slurp(errfile);
        CHECK(count_lines(err) == 1);
        CHECK(err.find("invalid input") != std::string::npos);
    }
    SECTION("missing required flag") {
        CHECK(run_cli("synthesize --budget 80", "/dev/null", errfile.string()) == 3);
        CHECK(count_lines(slurp(errfile)) == 1);
    }
    SECTION("nonexistent plant file") {
        CHECK(run_cli("synthesize --plant /no/such/file.json --budget 80", "/dev/null",
                      errfile.string()) == 3);
        CHECK(count_lines(slurp(errfile)) == 1);
    }
    SECTION("malformed plant file") {
        const auto bad = dir / "bad_plant.json";
        std::ofstream(bad) << "{\"kind\": \"stationary\", \"A\": [[";
        CHECK(run_cli("synthesize --plant \"" + bad.string() + "\" --budget 80", "/dev/null",
                      errfile.string()) == 3);
        CHECK(count_lines(slurp(errfile)) == 1);
    }
    SECTION("unwritable output path") {
        CHECK(run_cli("asymptote --plant \"" + plant + "\" --out /no/such/dir/out.json",
                      "/dev/null", errfile.string()) == 3);
        CHECK(count_lines(slurp(errfile)) == 1);
    }
    SECTION("too few trials for statistics") {
        CHECK(run_cli("simulate --plant \"" + plant + "\" --budget 80 --trials 1", "/dev/null",
                      errfile.string()) == 3);
        CHECK(count_lines(slurp(errfile)) == 1);
    }
    SECTION("unknown subcommand") {
        CHECK(run_cli("frobnicate", "/dev/null", errfile.string()) == 3);
    }
}

TEST_CASE("infeasible budgets exit with code 2") {
    const auto dir = tmp_dir();
    const auto errfile = dir / "stderr_infeasible.txt";
    const std::string plant = kData + "/bench4_stationary.json";
    CHECK(run_cli("synthesize --plant \"" + plant + "\" --budget 20", "/dev/null",
                  errfile.string()) == 2);
    const std::string err = slurp(errfile);
    CHECK(count_lines(err) == 1);
    CHECK(err.find("infeasible budget") != std::string::npos);
}

TEST_CASE("tradeoff emits the documented curve format") {
    const auto dir = tmp_dir();
    const auto out1 = dir / "curve_a.csv";
    const auto out2 = dir / "curve_b.csv";
    const std::string plant = kData + "/bench4_stationary.json";
    const std::string args = "tradeoff --plant \"" + plant +
                             "\" --dmin 20 --dmax 120 --points 6 --out ";

    REQUIRE(run_cli(args + out1.string()) == 0);
    REQUIRE(run_cli(args + out2.string()) == 0);
    const std::string text = slurp(out1);
    CHECK(text == slurp(out2));

    std::istringstream lines(text);
    std::string line;
    REQUIRE(std::getline(lines, line));
    CHECK(line.rfind("# asymptote_bits = ", 0) == 0);
    {
        const double asym = std::stod(line.substr(line.find('=') + 1));
        CHECK(asym == Approx(1.1685388890680164).margin(1e-12));
    }
    REQUIRE(std::getline(lines, line));
    CHECK(line.rfind("# Dmin = ", 0) == 0);
    const double dmin_floor = std::stod(line.substr(line.find('=') + 1));
    CHECK(dmin_floor == Approx(31.4833415351).margin(1e-6));
    REQUIRE(std::getline(lines, line));
    CHECK(line == "D,DI_bits,rank,R_upper_bits,feasible");

    int rows = 0;
    int infeasible_rows = 0;
    double di_at_80 = -1.0;
    while (std::getline(lines, line)) {
        ++rows;
        const auto fields = split(line, ',');
        REQUIRE(fields.size() == 5);
        if (fields[4] == "0") {
            ++infeasible_rows;
            CHECK(fields[1].empty());  // infeasible rows leave the rate blank
            CHECK(std::stod(fields[0]) < dmin_floor);
        } else {
            REQUIRE(fields[4] == "1");
            CHECK(std::stod(fields[1]) > 0.0);
            CHECK(std::stod(fields[3]) > std::stod(fields[1]));  // coding overhead
            if (std::stod(fields[0]) == 80.0) di_at_80 = std::stod(fields[1]);
        }
    }
    CHECK(rows == 6);
    CHECK(infeasible_rows == 1);  // only D=20 sits below the floor

    // Values parse back losslessly: the D=80 row must reproduce the
    // synthesize result for the same budget bit for bit.
    const auto design_path = dir / "design80_curvecheck.json";
    REQUIRE(run_cli("synthesize --plant \"" + plant + "\" --budget 80 --out " +
                    design_path.string()) == 0);
    const json design = json::parse(slurp(design_path));
    CHECK(di_at_80 == design.at("DI_bits").get<double>());
}

TEST_CASE("single-point grid yields one row plus header") {
    const auto dir = tmp_dir();
    const auto out = dir / "curve_single.csv";
    const std::string plant = kData + "/bench4_stationary.json";
    REQUIRE(run_cli("tradeoff --plant \"" + plant +
                    "\" --dmin 80 --dmax 80 --points 1 --out " + out.string()) == 0);
    const std::string text = slurp(out);
    CHECK(count_lines(text) == 4);  // two comment lines, header, one row
}

TEST_CASE("simulate reports are deterministic and statistically sane") {
    const auto dir = tmp_dir();
    const auto out1 = dir / "sim_a.json";
    const auto out2 = dir / "sim_b.json";
    const auto out3 = dir / "sim_c.json";
    const std::string plant = kData + "/scalar_unstable.json";
    const std::string base = "simulate --plant \"" + plant +
                             "\" --budget 11.09017 --steps 300 --trials 60 --seed 5 --out ";

    REQUIRE(run_cli(base + out1.string()) == 0);
    REQUIRE(run_cli(base + out2.string()) == 0);
    CHECK(slurp(out1) == slurp(out2));

    const json report = json::parse(slurp(out1));
    CHECK(report.at("DI_bits").get<double>() == Approx(1.29248).margin(1e-4));
    CHECK_FALSE(report.at("diverged").get<bool>());
    const double mean = report.at("empirical_cost").at("mean").get<double>();
    const double se = report.at("empirical_cost").at("stderr").get<double>();
    CHECK(se > 0.0);
    CHECK(std::abs(mean - 11.09017) <= 5.0 * se);
    CHECK(report.at("orthogonality").at("pass").get<bool>());

    REQUIRE(run_cli("simulate --plant \"" + plant +
                    "\" --budget 11.09017 --steps 300 --trials 60 --seed 6 --out " +
                    out3.string()) == 0);
    CHECK(slurp(out3) != slurp(out1));  // a different seed changes the draw
}

TEST_CASE("asymptote reports the stabilization floor") {
    const auto dir = tmp_dir();
    const auto out = dir / "asym.json";
    REQUIRE(run_cli("asymptote --plant \"" + kData + "/bench4_stationary.json\" --out " +
                    out.string()) == 0);
    const json report = json::parse(slurp(out));
    CHECK(report.at("asymptote_bits").get<double>() == Approx(1.1685388890680164).margin(1e-9));

    REQUIRE(run_cli("asymptote --plant \"" + kData + "/tv_two_state.json\" --out " +
                    out.string()) == 0);
    const json tv_report = json::parse(slurp(out));
    CHECK(tv_report.at("asymptote_bits").get<double>() == 0.0);  // finite horizon: no floor
}

TEST_CASE("thread cap from the environment does not change outputs") {
    const auto dir = tmp_dir();
    const auto serial = dir / "curve_serial.csv";
    const auto threaded = dir / "curve_threaded.csv";
    const std::string plant = kData + "/bench4_stationary.json";
    const std::string args = "tradeoff --plant \"" + plant +
                             "\" --dmin 40 --dmax 100 --points 4 --out ";

    REQUIRE(run_cli(args + serial.string()) == 0);
    REQUIRE(run_cli(args + threaded.string(), "/dev/null", "/dev/null",
                    "RATELQG_THREADS=4 ") == 0);
    CHECK(slurp(serial) == slurp(threaded));
}
