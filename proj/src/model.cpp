#include "ratelqg/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ratelqg/matrix_util.hpp"

namespace ratelqg {

namespace {

using nlohmann::ordered_json;

constexpr double kSymTol = 1e-9;    // relative skew accepted for symmetrization
constexpr double kPsdTol = 1e-10;   // relative eigenvalue slack for PSD checks
constexpr double kPdTol = 1e-12;    // relative eigenvalue floor for PD checks

double inf_norm(const Eigen::MatrixXd& M) {
    return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

/// Symmetrizes M in place when its skew is within tolerance; otherwise records
/// an issue. Returns true when M ends up symmetric.
bool enforce_symmetry(Eigen::MatrixXd& M, const std::string& label,
                      ValidationReport& report) {
    if (M.rows() != M.cols()) {
        report.issues.push_back(label + " is not square");
        return false;
    }
    const double skew = inf_norm(M - M.transpose().eval());
    if (skew == 0.0) return true;
    if (skew <= kSymTol * (1.0 + inf_norm(M))) {
        M = symmetrized(M);
        report.symmetrized = true;
        return true;
    }
    report.issues.push_back(label + " is not symmetric");
    return false;
}

void check_psd(const Eigen::MatrixXd& M, const std::string& label,
               ValidationReport& report) {
    if (sym_min_eigenvalue(M) < -kPsdTol * (1.0 + inf_norm(M))) {
        report.issues.push_back(label + " not positive semidefinite");
    }
}

void check_pd(const Eigen::MatrixXd& M, const std::string& label,
              ValidationReport& report) {
    if (M.rows() == 0 || sym_min_eigenvalue(M) <= kPdTol * (1.0 + inf_norm(M))) {
        report.issues.push_back(label + " not positive definite");
    }
}

void check_dims(const Eigen::MatrixXd& M, Eigen::Index rows, Eigen::Index cols,
                const std::string& label, ValidationReport& report) {
    if (M.rows() != rows || M.cols() != cols) {
        std::ostringstream os;
        os << label << " has shape " << M.rows() << "x" << M.cols()
           << ", expected " << rows << "x" << cols;
        report.issues.push_back(os.str());
    }
}

std::string staged(const char* name, int t) {
    std::ostringstream os;
    os << name << " (stage " << t << ")";
    return os.str();
}

int complex_rank(const Eigen::MatrixXcd& M) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    const auto& sigma = svd.singularValues();
    if (sigma.size() == 0) return 0;
    const double thresh =
        std::max(M.rows(), M.cols()) * 1e-13 * std::max(sigma(0), 1e-300);
    int r = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma(i) > thresh) ++r;
    }
    return r;
}

}  // namespace

const Eigen::MatrixXd& PartiallyObservedPlant::H_at(int t) const {
    const std::size_t idx = std::min<std::size_t>(t - 1, H.size() - 1);
    return H[idx];
}

const Eigen::MatrixXd& PartiallyObservedPlant::G_at(int t) const {
    const std::size_t idx = std::min<std::size_t>(t - 1, G.size() - 1);
    return G[idx];
}

std::string ValidationReport::joined() const {
    std::string out;
    for (const auto& issue : issues) {
        if (!out.empty()) out += "; ";
        out += issue;
    }
    return out;
}

ValidationReport validate_tv_plant(TimeVaryingPlant& plant) {
    ValidationReport report;
    if (plant.horizon < 1) {
        report.issues.push_back("horizon must be at least 1");
        return report;
    }
    const auto T = static_cast<std::size_t>(plant.horizon);
    if (plant.A.size() != T || plant.B.size() != T || plant.W.size() != T ||
        plant.Q.size() != T || plant.R.size() != T) {
        report.issues.push_back(
            "per-stage arrays A, B, W, Q, R must all have length equal to the horizon");
        return report;
    }
    const Eigen::Index n = plant.A[0].rows();
    const Eigen::Index m = plant.B[0].cols();
    if (n < 1) {
        report.issues.push_back("state dimension must be at least 1");
        return report;
    }
    for (std::size_t i = 0; i < T; ++i) {
        const int t = static_cast<int>(i) + 1;
        check_dims(plant.A[i], n, n, staged("A", t), report);
        check_dims(plant.B[i], n, m, staged("B", t), report);
        check_dims(plant.W[i], n, n, staged("W", t), report);
        check_dims(plant.Q[i], n, n, staged("Q", t), report);
        check_dims(plant.R[i], m, m, staged("R", t), report);
    }
    if (!report.ok()) return report;
    for (std::size_t i = 0; i < T; ++i) {
        const int t = static_cast<int>(i) + 1;
        if (enforce_symmetry(plant.W[i], staged("W", t), report)) {
            check_psd(plant.W[i], staged("W", t), report);
        }
        if (enforce_symmetry(plant.Q[i], staged("Q", t), report)) {
            check_psd(plant.Q[i], staged("Q", t), report);
        }
        if (enforce_symmetry(plant.R[i], staged("R", t), report)) {
            check_pd(plant.R[i], staged("R", t), report);
        }
    }
    check_dims(plant.P_init, n, n, "P_init", report);
    if (report.ok() && enforce_symmetry(plant.P_init, "P_init", report)) {
        check_pd(plant.P_init, "P_init", report);
    }
    return report;
}

ValidationReport validate_stationary(StationaryPlant& plant) {
    ValidationReport report;
    const Eigen::Index n = plant.A.rows();
    const Eigen::Index m = plant.B.cols();
    if (n < 1) {
        report.issues.push_back("state dimension must be at least 1");
        return report;
    }
    check_dims(plant.A, n, n, "A", report);
    check_dims(plant.B, n, m, "B", report);
    check_dims(plant.W, n, n, "W", report);
    check_dims(plant.Q, n, n, "Q", report);
    check_dims(plant.R, m, m, "R", report);
    if (!report.ok()) return report;
    if (enforce_symmetry(plant.W, "W", report)) check_psd(plant.W, "W", report);
    if (enforce_symmetry(plant.Q, "Q", report)) check_psd(plant.Q, "Q", report);
    if (enforce_symmetry(plant.R, "R", report)) check_pd(plant.R, "R", report);
    if (!report.ok()) return report;

    // Eigenvector rank tests on every unstable or marginal closed-disc mode.
    Eigen::EigenSolver<Eigen::MatrixXd> es(plant.A);
    const Eigen::MatrixXcd Ac = plant.A.cast<std::complex<double>>();
    const Eigen::MatrixXd Qh = psd_sqrt(plant.Q);
    bool stabilizable = true;
    bool detectable = true;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::complex<double> lambda = es.eigenvalues()(i);
        if (std::abs(lambda) < 1.0 - 1e-9) continue;
        Eigen::MatrixXcd shifted = Ac;
        shifted.diagonal().array() -= lambda;
        Eigen::MatrixXcd pencil_b(n, n + m);
        pencil_b << shifted, plant.B.cast<std::complex<double>>();
        if (complex_rank(pencil_b) < n) stabilizable = false;
        Eigen::MatrixXcd pencil_q(2 * n, n);
        pencil_q << shifted, Qh.cast<std::complex<double>>();
        if (complex_rank(pencil_q) < n) detectable = false;
    }
    if (!stabilizable) report.issues.push_back("(A, B) is not stabilizable");
    if (!detectable) report.issues.push_back("(A, Q^{1/2}) is not detectable");
    return report;
}

ValidationReport validate_po_plant(PartiallyObservedPlant& plant) {
    ValidationReport report = validate_tv_plant(plant.base);
    if (!report.ok()) return report;
    const auto T = static_cast<std::size_t>(plant.base.horizon);
    const Eigen::Index n = plant.base.state_dim();
    if (plant.H.size() != T && plant.H.size() != T + 1) {
        report.issues.push_back("H must carry horizon or horizon + 1 entries");
    }
    if (plant.G.size() != T && plant.G.size() != T + 1) {
        report.issues.push_back("G must carry horizon or horizon + 1 entries");
    }
    if (!report.ok()) return report;
    const Eigen::Index p = plant.H[0].rows();
    if (p < 1 || p > n) {
        report.issues.push_back("observation dimension must lie in [1, state dimension]");
        return report;
    }
    for (std::size_t i = 0; i < plant.H.size(); ++i) {
        const int t = static_cast<int>(i) + 1;
        check_dims(plant.H[i], p, n, staged("H", t), report);
        if (plant.H[i].rows() == p && plant.H[i].cols() == n &&
            complex_rank(plant.H[i].cast<std::complex<double>>()) < p) {
            report.issues.push_back(staged("H", t) + " does not have full row rank");
        }
    }
    for (std::size_t i = 0; i < plant.G.size(); ++i) {
        const int t = static_cast<int>(i) + 1;
        check_dims(plant.G[i], p, p, staged("G", t), report);
        if (plant.G[i].rows() == p && plant.G[i].cols() == p &&
            enforce_symmetry(plant.G[i], staged("G", t), report)) {
            check_psd(plant.G[i], staged("G", t), report);
        }
    }
    // The forward filter gains have full column rank only under strictly
    // positive process noise, so tighten the base PSD requirement here.
    for (std::size_t i = 0; i < T; ++i) {
        const auto& W = plant.base.W[i];
        if (sym_min_eigenvalue(W) <= 1e-10 * (1.0 + inf_norm(W))) {
            report.issues.push_back(staged("W", static_cast<int>(i) + 1) +
                                    " must be strictly positive definite for a "
                                    "partially observed plant");
        }
    }
    return report;
}

// ============================================================================
// JSON serialization
// ============================================================================

namespace {

const ordered_json& need(const ordered_json& j, const char* key) {
    if (!j.contains(key)) {
        throw std::invalid_argument(std::string("plant schema: missing field \"") +
                                    key + "\"");
    }
    return j.at(key);
}

Eigen::MatrixXd read_matrix(const ordered_json& j, const std::string& label) {
    if (!j.is_array() || j.empty()) {
        throw std::invalid_argument("plant schema: field \"" + label +
                                    "\" must be a non-empty array of rows");
    }
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    Eigen::MatrixXd M;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& row = j.at(r);
        if (!row.is_array() || row.empty()) {
            throw std::invalid_argument("plant schema: field \"" + label +
                                        "\" row " + std::to_string(r) +
                                        " must be a non-empty array");
        }
        if (r == 0) {
            cols = row.size();
            M.resize(rows, cols);
        } else if (row.size() != cols) {
            throw std::invalid_argument("plant schema: field \"" + label +
                                        "\" is not rectangular");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const auto& v = row.at(c);
            if (!v.is_number()) {
                throw std::invalid_argument("plant schema: field \"" + label +
                                            "\" contains a non-numeric entry");
            }
            M(r, c) = v.get<double>();
        }
    }
    return M;
}

std::vector<Eigen::MatrixXd> read_matrix_list(const ordered_json& j,
                                              const std::string& label) {
    if (!j.is_array() || j.empty()) {
        throw std::invalid_argument("plant schema: field \"" + label +
                                    "\" must be a non-empty array of matrices");
    }
    std::vector<Eigen::MatrixXd> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(read_matrix(j.at(i), label + "[" + std::to_string(i) + "]"));
    }
    return out;
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

int read_horizon(const ordered_json& j) {
    const auto& t = need(j, "T");
    if (!t.is_number_integer() || t.get<long long>() < 1) {
        throw std::invalid_argument("plant schema: field \"T\" must be a positive integer");
    }
    return t.get<int>();
}

}  // namespace

PlantModel parse_plant(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("plant parse error: ") + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("plant schema: top-level value must be an object");
    }
    if (!need(j, "type").is_string()) {
        throw std::invalid_argument("plant schema: field \"type\" must be a string");
    }
    const std::string type = j.at("type").get<std::string>();

    if (type == "stationary") {
        StationaryPlant p;
        p.A = read_matrix(need(j, "A"), "A");
        p.B = read_matrix(need(j, "B"), "B");
        p.W = read_matrix(need(j, "W"), "W");
        p.Q = read_matrix(need(j, "Q"), "Q");
        p.R = read_matrix(need(j, "R"), "R");
        auto report = validate_stationary(p);
        if (!report.ok()) {
            throw std::invalid_argument("plant validation failed: " + report.joined());
        }
        return p;
    }
    if (type == "tv" || type == "po") {
        TimeVaryingPlant base;
        base.horizon = read_horizon(j);
        base.A = read_matrix_list(need(j, "A"), "A");
        base.B = read_matrix_list(need(j, "B"), "B");
        base.W = read_matrix_list(need(j, "W"), "W");
        base.Q = read_matrix_list(need(j, "Q"), "Q");
        base.R = read_matrix_list(need(j, "R"), "R");
        base.P_init = read_matrix(need(j, "P_init"), "P_init");
        if (type == "tv") {
            auto report = validate_tv_plant(base);
            if (!report.ok()) {
                throw std::invalid_argument("plant validation failed: " + report.joined());
            }
            return base;
        }
        PartiallyObservedPlant p;
        p.base = std::move(base);
        p.H = read_matrix_list(need(j, "H"), "H");
        p.G = read_matrix_list(need(j, "G"), "G");
        auto report = validate_po_plant(p);
        if (!report.ok()) {
            throw std::invalid_argument("plant validation failed: " + report.joined());
        }
        return p;
    }
    throw std::invalid_argument("plant schema: unknown plant type \"" + type + "\"");
}

PlantModel load_plant(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::invalid_argument("cannot open plant file: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_plant(buffer.str());
}

std::string serialize_plant(const PlantModel& plant) {
    ordered_json j;
    if (const auto* p = std::get_if<StationaryPlant>(&plant)) {
        j["type"] = "stationary";
        j["A"] = write_matrix(p->A);
        j["B"] = write_matrix(p->B);
        j["W"] = write_matrix(p->W);
        j["Q"] = write_matrix(p->Q);
        j["R"] = write_matrix(p->R);
    } else if (const auto* p = std::get_if<TimeVaryingPlant>(&plant)) {
        j["type"] = "tv";
        j["T"] = p->horizon;
        j["A"] = write_matrix_list(p->A);
        j["B"] = write_matrix_list(p->B);
        j["W"] = write_matrix_list(p->W);
        j["Q"] = write_matrix_list(p->Q);
        j["R"] = write_matrix_list(p->R);
        j["P_init"] = write_matrix(p->P_init);
    } else {
        const auto& po = std::get<PartiallyObservedPlant>(plant);
        j["type"] = "po";
        j["T"] = po.base.horizon;
        j["A"] = write_matrix_list(po.base.A);
        j["B"] = write_matrix_list(po.base.B);
        j["W"] = write_matrix_list(po.base.W);
        j["Q"] = write_matrix_list(po.base.Q);
        j["R"] = write_matrix_list(po.base.R);
        j["P_init"] = write_matrix(po.base.P_init);
        j["H"] = write_matrix_list(po.H);
        j["G"] = write_matrix_list(po.G);
    }
    return j.dump(2) + "\n";
}

void save_plant(const PlantModel& plant, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write plant file: " + path.string());
    }
    out << serialize_plant(plant);
}

}  // namespace ratelqg
