#include "ratelqg/maxdet.hpp"

#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <functional>
#include <sstream>

#include "ratelqg/errors.hpp"
#include "ratelqg/matrix_util.hpp"

namespace ratelqg {

namespace {

constexpr double kRt2 = 1.4142135623730951;
constexpr double kCenterTight = 1e-9;  // squared Newton decrement / 2, converged
// Accepted when progress stalls: on ill-conditioned instances (iterates near a
// large cap face) rounding puts a floor on the decrement and Newton settles
// into a small limit cycle.  A decrement of this size inflates the duality gap
// only by a factor (1 + O(lambda)), far below the path tolerance.
constexpr double kCenterLoose = 2.5e-3;

int svec_len(int n) { return n * (n + 1) / 2; }

// svec packs the upper triangle column by column, off-diagonals scaled by
// sqrt(2) so svec(A) . svec(B) equals the Frobenius inner product <A, B>.
void svec_into(const Eigen::MatrixXd& M, Eigen::Ref<Eigen::VectorXd> out) {
    int k = 0;
    for (int j = 0; j < M.cols(); ++j) {
        for (int i = 0; i <= j; ++i) {
            out(k++) = (i == j) ? M(i, j) : kRt2 * M(i, j);
        }
    }
}

Eigen::VectorXd svec(const Eigen::MatrixXd& M) {
    Eigen::VectorXd v(svec_len(static_cast<int>(M.rows())));
    svec_into(M, v);
    return v;
}

Eigen::MatrixXd smat(const Eigen::Ref<const Eigen::VectorXd>& v, int n) {
    Eigen::MatrixXd M(n, n);
    int k = 0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i <= j; ++i) {
            const double val = v(k++);
            if (i == j) {
                M(i, j) = val;
            } else {
                M(i, j) = val / kRt2;
                M(j, i) = M(i, j);
            }
        }
    }
    return M;
}

struct Layout {
    std::vector<int> offset, vdim, mdim;
    int total = 0;
};

Layout make_layout(const std::vector<SymmetricVariable>& vars) {
    Layout lay;
    for (const auto& v : vars) {
        lay.offset.push_back(lay.total);
        lay.mdim.push_back(v.dim);
        lay.vdim.push_back(svec_len(v.dim));
        lay.total += svec_len(v.dim);
    }
    return lay;
}

std::vector<Eigen::MatrixXd> unpack(const Eigen::VectorXd& x, const Layout& lay) {
    std::vector<Eigen::MatrixXd> vals(lay.offset.size());
    for (std::size_t b = 0; b < vals.size(); ++b) {
        vals[b] = smat(x.segment(lay.offset[b], lay.vdim[b]), lay.mdim[b]);
    }
    return vals;
}

Eigen::VectorXd pack(const std::vector<Eigen::MatrixXd>& vals, const Layout& lay) {
    Eigen::VectorXd x(lay.total);
    for (std::size_t b = 0; b < vals.size(); ++b) {
        svec_into(symmetrized(vals[b]), x.segment(lay.offset[b], lay.vdim[b]));
    }
    return x;
}

double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Adds scale * M(G) to H at (row_off, col_off), where M(G) represents the
/// congruence map X -> G X G^T in svec coordinates: column q = svec(G B_q G^T)
/// over the svec basis B_q. Mirrors the transpose block unless this is the
/// diagonal contribution of a single term paired with itself.
void add_skron(Eigen::MatrixXd& H, int row_off, int col_off,
               const Eigen::MatrixXd& G, double scale, bool self_pair) {
    const int ns = static_cast<int>(G.rows());
    const int nu = static_cast<int>(G.cols());
    const int ds = svec_len(ns);
    const int du = svec_len(nu);
    Eigen::MatrixXd block(ds, du);
    Eigen::MatrixXd outer(ns, ns);
    Eigen::VectorXd col(ds);
    int q = 0;
    for (int j = 0; j < nu; ++j) {
        for (int i = 0; i <= j; ++i) {
            if (i == j) {
                outer.noalias() = G.col(j) * G.col(j).transpose();
            } else {
                outer.noalias() = G.col(i) * G.col(j).transpose();
                outer += outer.transpose().eval();
                outer *= 1.0 / kRt2;
            }
            svec_into(outer, col);
            block.col(q++) = col;
        }
    }
    H.block(row_off, col_off, ds, du) += scale * block;
    if (!self_pair) {
        H.block(col_off, row_off, du, ds) += scale * block.transpose();
    }
}

class Engine {
public:
    Engine(const MaxDetProblem& prob, const SolverSettings& st)
        : prob_(prob), st_(st), lay_(make_layout(prob.variables)) {
        theta_ = 0.0;
        for (const auto& c : prob.constraints) {
            theta_ += c.dim;
            scalars_.push_back(c.dim == 1 ? prep_scalar(c) : ScalarLin{});
        }
        for (const auto& term : prob.objective) {
            if (term.expr.dim > 1 && !term.expr.traces.empty()) {
                throw std::invalid_argument(
                    "max-det problem: trace terms are only valid in 1x1 expressions");
            }
        }
        for (const auto& c : prob.constraints) {
            if (c.dim > 1 && !c.traces.empty()) {
                throw std::invalid_argument(
                    "max-det problem: trace terms are only valid in 1x1 expressions");
            }
        }
    }

    const Layout& layout() const { return lay_; }
    double theta() const { return theta_; }

    bool strictly_feasible(const std::vector<Eigen::MatrixXd>& vals) const {
        double psi = 0.0;
        return eval_merit(pack(vals, lay_), vals, 1.0, psi);
    }

    double objective_value(const Eigen::VectorXd& x) const {
        const auto vals = unpack(x, lay_);
        double f0 = linear_term(x);
        for (const auto& term : prob_.objective) {
            Eigen::MatrixXd E = symmetrized(term.expr.evaluate(vals));
            Eigen::LLT<Eigen::MatrixXd> llt(E);
            if (llt.info() != Eigen::Success) {
                return std::numeric_limits<double>::quiet_NaN();
            }
            f0 -= term.weight * logdet_from_llt(llt);
        }
        return f0 + prob_.constant_offset;
    }

    /// Follows the central path from a strictly feasible x until
    /// theta / t < gap_target. The monitor, when set, runs after each
    /// centering; a nonzero return stops the path (reported as rc 1).
    /// Returns 0 on success, 1 on monitor stop, 2 on numerical failure.
    int run_path(Eigen::VectorXd& x, double gap_target, int& newton_total,
                 double& gap_out,
                 const std::function<int(const Eigen::VectorXd&, double)>& monitor) {
        double t = 1.0;
        Eigen::VectorXd x_good;
        double gap_good = std::numeric_limits<double>::infinity();
        for (int outer = 0; outer < 90; ++outer) {
            if (!center(t, x, newton_total)) {
                // On badly scaled instances the distance to a binding face can
                // drop below representational rounding before the target gap is
                // met, and the last centering jams.  The previous center is a
                // valid point whose gap bound is theta / t_prev; fall back to
                // it when that bound still meets the caller's tolerance
                // (gap_target carries a factor-2 safety margin).
                if (x_good.size() > 0 && gap_good <= 2.0 * gap_target) {
                    x = x_good;
                    gap_out = gap_good;
                    return 0;
                }
                return 2;
            }
            gap_out = theta_ / t;
            if (monitor) {
                const int rc = monitor(x, gap_out);
                if (rc != 0) return 1;
            }
            if (theta_ == 0.0 || gap_out < gap_target) return 0;
            x_good = x;
            gap_good = gap_out;
            t *= st_.barrier_growth;
        }
        return 2;
    }

    void fill_certificate(const std::vector<Eigen::MatrixXd>& vals,
                          MaxDetSolution& out) const {
        double min_eig = std::numeric_limits<double>::infinity();
        bool ok = true;
        for (const auto& c : prob_.constraints) {
            const Eigen::MatrixXd E = symmetrized(c.evaluate(vals));
            const double lam = sym_min_eigenvalue(E);
            min_eig = std::min(min_eig, lam);
            const double scale = 1.0 + (E.size() ? E.cwiseAbs().maxCoeff() : 0.0);
            if (lam < -1e-9 * scale) ok = false;
        }
        out.min_constraint_eig =
            prob_.constraints.empty() ? 0.0 : min_eig;
        out.certificate_ok = ok;
    }

private:
    struct ScalarLin {
        double c0 = 0.0;
        Eigen::VectorXd alpha;
    };

    ScalarLin prep_scalar(const AffineExpr& e) const {
        ScalarLin lin;
        lin.c0 = e.constant(0, 0);
        lin.alpha = Eigen::VectorXd::Zero(lay_.total);
        for (const auto& ct : e.congruences) {
            const Eigen::MatrixXd JJ = ct.J.transpose() * ct.J;
            lin.alpha.segment(lay_.offset[ct.var], lay_.vdim[ct.var]) +=
                ct.sign * svec(symmetrized(JJ));
        }
        for (const auto& tt : e.traces) {
            lin.alpha.segment(lay_.offset[tt.var], lay_.vdim[tt.var]) +=
                svec(symmetrized(tt.C));
        }
        for (const auto& it : e.identities) {
            lin.alpha(lay_.offset[it.var]) += it.coeff;
        }
        return lin;
    }

    double linear_term(const Eigen::VectorXd& x) const {
        if (prob_.linear_cost.size() == 0) return 0.0;
        return prob_.linear_cost.dot(x);
    }

    /// Merit value t * f0 + barrier; false when outside the domain.
    bool eval_merit(const Eigen::VectorXd& x,
                    const std::vector<Eigen::MatrixXd>& vals, double t,
                    double& psi) const {
        double f0 = linear_term(x);
        for (const auto& term : prob_.objective) {
            Eigen::MatrixXd E = symmetrized(term.expr.evaluate(vals));
            Eigen::LLT<Eigen::MatrixXd> llt(E);
            if (llt.info() != Eigen::Success) return false;
            f0 -= term.weight * logdet_from_llt(llt);
        }
        psi = t * f0;
        for (std::size_t k = 0; k < prob_.constraints.size(); ++k) {
            const auto& c = prob_.constraints[k];
            if (c.dim == 1) {
                const double f = scalars_[k].c0 + scalars_[k].alpha.dot(x);
                if (!(f > 0.0)) return false;
                psi -= std::log(f);
            } else {
                Eigen::MatrixXd E = symmetrized(c.evaluate(vals));
                Eigen::LLT<Eigen::MatrixXd> llt(E);
                if (llt.info() != Eigen::Success) return false;
                psi -= logdet_from_llt(llt);
            }
        }
        return true;
    }

    /// Adds mult * (-logdet E(x)) with gradient and curvature; false when
    /// E(x) leaves the cone.
    bool add_neg_logdet(const AffineExpr& e,
                        const std::vector<Eigen::MatrixXd>& vals, double mult,
                        double& value, Eigen::VectorXd& grad,
                        Eigen::MatrixXd& hess) const {
        Eigen::MatrixXd E = symmetrized(e.evaluate(vals));
        Eigen::LLT<Eigen::MatrixXd> llt(E);
        if (llt.info() != Eigen::Success) return false;
        value -= mult * logdet_from_llt(llt);
        const Eigen::MatrixXd Z =
            llt.solve(Eigen::MatrixXd::Identity(e.dim, e.dim));

        std::vector<Eigen::MatrixXd> ZJ;
        ZJ.reserve(e.congruences.size());
        for (const auto& ct : e.congruences) ZJ.push_back(Z * ct.J);

        for (std::size_t s = 0; s < e.congruences.size(); ++s) {
            const auto& ct = e.congruences[s];
            const Eigen::MatrixXd JtZJ =
                symmetrized(ct.J.transpose() * ZJ[s]);
            grad.segment(lay_.offset[ct.var], lay_.vdim[ct.var]) -=
                mult * ct.sign * svec(JtZJ);
        }
        const double trZ = Z.trace();
        for (const auto& it : e.identities) {
            grad(lay_.offset[it.var]) -= mult * it.coeff * trZ;
        }

        for (std::size_t s = 0; s < e.congruences.size(); ++s) {
            for (std::size_t u = s; u < e.congruences.size(); ++u) {
                const Eigen::MatrixXd G =
                    e.congruences[s].J.transpose() * ZJ[u];
                add_skron(hess, lay_.offset[e.congruences[s].var],
                          lay_.offset[e.congruences[u].var], G,
                          mult * e.congruences[s].sign * e.congruences[u].sign,
                          s == u);
            }
        }
        if (!e.identities.empty()) {
            for (std::size_t s = 0; s < e.congruences.size(); ++s) {
                const Eigen::MatrixXd J2 =
                    symmetrized(ZJ[s].transpose() * ZJ[s]);  // J^T Z^2 J
                const Eigen::VectorXd v = svec(J2);
                for (const auto& it : e.identities) {
                    const double scale =
                        mult * e.congruences[s].sign * it.coeff;
                    hess.block(lay_.offset[e.congruences[s].var],
                               lay_.offset[it.var],
                               lay_.vdim[e.congruences[s].var], 1) += scale * v;
                    hess.block(lay_.offset[it.var],
                               lay_.offset[e.congruences[s].var], 1,
                               lay_.vdim[e.congruences[s].var]) +=
                        scale * v.transpose();
                }
            }
            const double trZ2 = Z.squaredNorm();
            for (std::size_t s = 0; s < e.identities.size(); ++s) {
                for (std::size_t u = s; u < e.identities.size(); ++u) {
                    const double scale = mult * e.identities[s].coeff *
                                         e.identities[u].coeff * trZ2;
                    const int ro = lay_.offset[e.identities[s].var];
                    const int co = lay_.offset[e.identities[u].var];
                    hess(ro, co) += scale;
                    if (s != u) hess(co, ro) += scale;
                }
            }
        }
        return true;
    }

    bool assemble(const Eigen::VectorXd& x,
                  const std::vector<Eigen::MatrixXd>& vals, double t,
                  double& psi, Eigen::VectorXd& grad,
                  Eigen::MatrixXd& hess) const {
        grad.setZero(lay_.total);
        hess.setZero(lay_.total, lay_.total);
        psi = t * linear_term(x);
        if (prob_.linear_cost.size() != 0) grad += t * prob_.linear_cost;
        for (const auto& term : prob_.objective) {
            if (!add_neg_logdet(term.expr, vals, t * term.weight, psi, grad,
                                hess)) {
                return false;
            }
        }
        for (std::size_t k = 0; k < prob_.constraints.size(); ++k) {
            const auto& c = prob_.constraints[k];
            if (c.dim == 1) {
                const double f = scalars_[k].c0 + scalars_[k].alpha.dot(x);
                if (!(f > 0.0)) return false;
                psi -= std::log(f);
                grad -= scalars_[k].alpha / f;
                hess.noalias() += (1.0 / (f * f)) * scalars_[k].alpha *
                                  scalars_[k].alpha.transpose();
            } else {
                if (!add_neg_logdet(c, vals, 1.0, psi, grad, hess)) return false;
            }
        }
        return true;
    }

    /// Damped Newton to (approximate) center at path parameter t.
    bool center(double t, Eigen::VectorXd& x, int& newton_total) const {
        Eigen::VectorXd grad, dx;
        Eigen::MatrixXd hess;
        double psi = 0.0;
        double best_l2 = std::numeric_limits<double>::infinity();
        int since_best = 0;
        for (int iter = 0; iter < st_.max_newton_per_center; ++iter) {
            auto vals = unpack(x, lay_);
            if (!assemble(x, vals, t, psi, grad, hess)) return false;

            double reg = 0.0;
            const double scale_hint =
                std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
            bool solved = false;
            for (int attempt = 0; attempt < 14; ++attempt) {
                Eigen::MatrixXd H = hess;
                if (reg > 0.0) H.diagonal().array() += reg;
                Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
                if (ldlt.info() == Eigen::Success) {
                    dx = -ldlt.solve(grad);
                    if (dx.allFinite() && grad.dot(dx) < 0.0) {
                        solved = true;
                        break;
                    }
                }
                reg = (reg == 0.0) ? 1e-12 * scale_hint : reg * 100.0;
            }
            if (!solved) {
                // A zero gradient with singular curvature still counts as
                // centered (flat directions of a constant objective).
                return grad.norm() <= 1e-12 * (1.0 + std::abs(psi));
            }

            const double lambda2 = -grad.dot(dx);
            if (0.5 * lambda2 < kCenterTight) return true;
            // At large path parameters rounding noise puts a floor under the
            // decrement; once it stops shrinking inside the loose region the
            // point is as centered as double precision allows.
            if (lambda2 < 0.5 * best_l2) {
                best_l2 = lambda2;
                since_best = 0;
            } else if (++since_best >= 8 && 0.5 * lambda2 < kCenterLoose) {
                return true;
            }

            const double slope = grad.dot(dx);
            // Inside the quadratic-convergence region the full Newton step is
            // guaranteed to contract the decrement, and merit differences are
            // below floating-point resolution when t has grown large, so the
            // sufficient-decrease test is skipped there.
            const bool quad_zone = lambda2 <= 0.09 && reg == 0.0;
            double step = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 70; ++ls) {
                const Eigen::VectorXd xn = x + step * dx;
                const auto valsn = unpack(xn, lay_);
                double psin = 0.0;
                if (eval_merit(xn, valsn, t, psin) &&
                    (quad_zone ||
                     psin <= psi + st_.armijo * step * slope)) {
                    x = xn;
                    moved = true;
                    break;
                }
                step *= st_.backtrack;
            }
            ++newton_total;
            if (std::getenv("RATELQG_TRACE")) {
                std::fprintf(stderr,
                             "t=%.3g it=%d psi=%.12g l2=%.3g step=%g reg=%g\n",
                             t, iter, psi, lambda2, moved ? step : -1.0, reg);
            }
            if (!moved) return 0.5 * lambda2 < kCenterLoose;
        }
        // Ran out of iterations; accept only a mild residual decrement.
        auto vals = unpack(x, lay_);
        if (!assemble(x, vals, t, psi, grad, hess)) return false;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        if (ldlt.info() != Eigen::Success) return false;
        dx = -ldlt.solve(grad);
        return dx.allFinite() && 0.5 * std::abs(grad.dot(dx)) < kCenterLoose;
    }

    const MaxDetProblem& prob_;
    SolverSettings st_;
    Layout lay_;
    double theta_ = 0.0;
    std::vector<ScalarLin> scalars_;
};

/// Slack formulation used when no strictly feasible start is available:
/// minimize s subject to every constraint (and objective cone block) shifted
/// by s I, with large box bounds keeping the search region compact.
MaxDetProblem make_phase1(const MaxDetProblem& prob, int& slack_var) {
    MaxDetProblem p1;
    p1.variables = prob.variables;
    slack_var = static_cast<int>(p1.variables.size());
    p1.variables.push_back({"_slack", 1});

    auto slacked = [&](const AffineExpr& e) {
        AffineExpr out = e;
        out.identities.push_back({slack_var, 1.0});
        return out;
    };
    for (const auto& c : prob.constraints) p1.constraints.push_back(slacked(c));
    for (const auto& term : prob.objective) {
        p1.constraints.push_back(slacked(term.expr));
    }
    constexpr double kBox = 1e8;
    for (std::size_t b = 0; b < prob.variables.size(); ++b) {
        const int n = prob.variables[b].dim;
        AffineExpr upper;
        upper.dim = n;
        upper.constant = kBox * Eigen::MatrixXd::Identity(n, n);
        upper.congruences.push_back(
            {static_cast<int>(b), -1.0, Eigen::MatrixXd::Identity(n, n)});
        p1.constraints.push_back(upper);
        AffineExpr lower;
        lower.dim = n;
        lower.constant = kBox * Eigen::MatrixXd::Identity(n, n);
        lower.congruences.push_back(
            {static_cast<int>(b), 1.0, Eigen::MatrixXd::Identity(n, n)});
        p1.constraints.push_back(lower);
    }
    AffineExpr slack_floor;  // s >= -1
    slack_floor.dim = 1;
    slack_floor.constant = Eigen::MatrixXd::Constant(1, 1, 1.0);
    slack_floor.identities.push_back({slack_var, 1.0});
    p1.constraints.push_back(slack_floor);

    Layout lay1 = make_layout(p1.variables);
    p1.linear_cost = Eigen::VectorXd::Zero(lay1.total);
    p1.linear_cost(lay1.offset[slack_var]) = 1.0;
    return p1;
}

}  // namespace

Eigen::MatrixXd AffineExpr::evaluate(const std::vector<Eigen::MatrixXd>& values) const {
    Eigen::MatrixXd out = constant;
    for (const auto& ct : congruences) {
        out.noalias() += ct.sign * (ct.J * values[ct.var] * ct.J.transpose());
    }
    for (const auto& tt : traces) {
        out(0, 0) += tt.C.transpose().cwiseProduct(values[tt.var]).sum();
    }
    for (const auto& it : identities) {
        out.diagonal().array() += it.coeff * values[it.var](0, 0);
    }
    return out;
}

MaxDetSolution solve(const MaxDetProblem& problem, const SolverSettings& settings) {
    MaxDetSolution out;

    // Structural validation.
    const int nvars = static_cast<int>(problem.variables.size());
    if (nvars == 0) {
        throw std::invalid_argument("max-det problem: no variables declared");
    }
    for (const auto& v : problem.variables) {
        if (v.dim < 1) throw std::invalid_argument("max-det problem: variable dimension must be >= 1");
    }
    auto check_expr = [&](const AffineExpr& e) {
        if (e.dim < 1 || e.constant.rows() != e.dim || e.constant.cols() != e.dim) {
            throw std::invalid_argument("max-det problem: expression shape mismatch");
        }
        for (const auto& ct : e.congruences) {
            if (ct.var < 0 || ct.var >= nvars ||
                ct.J.rows() != e.dim ||
                ct.J.cols() != problem.variables[ct.var].dim) {
                throw std::invalid_argument("max-det problem: congruence term mismatch");
            }
        }
        for (const auto& tt : e.traces) {
            if (tt.var < 0 || tt.var >= nvars || e.dim != 1 ||
                tt.C.rows() != problem.variables[tt.var].dim ||
                tt.C.cols() != problem.variables[tt.var].dim) {
                throw std::invalid_argument("max-det problem: trace term mismatch");
            }
        }
        for (const auto& it : e.identities) {
            if (it.var < 0 || it.var >= nvars || problem.variables[it.var].dim != 1) {
                throw std::invalid_argument("max-det problem: identity term must reference a 1x1 variable");
            }
        }
    };
    for (const auto& c : problem.constraints) check_expr(c);
    for (const auto& t : problem.objective) check_expr(t.expr);

    if (problem.known_infeasible) {
        out.status = SolveStatus::infeasible;
        std::ostringstream os;
        os << "budget does not exceed the achievable floor";
        if (std::isfinite(problem.budget_floor)) {
            os << " (floor = " << problem.budget_floor << ")";
        }
        out.message = os.str();
        return out;
    }

    Engine engine(problem, settings);
    const Layout& lay = engine.layout();
    if (problem.linear_cost.size() != 0 &&
        problem.linear_cost.size() != lay.total) {
        throw std::invalid_argument("max-det problem: linear cost length mismatch");
    }

    Eigen::VectorXd x;
    bool have_start = false;
    if (!problem.initial_point.empty()) {
        bool shape_ok = problem.initial_point.size() == problem.variables.size();
        for (std::size_t b = 0; shape_ok && b < problem.initial_point.size(); ++b) {
            shape_ok = problem.initial_point[b].rows() == problem.variables[b].dim &&
                       problem.initial_point[b].cols() == problem.variables[b].dim;
        }
        if (shape_ok && engine.strictly_feasible(problem.initial_point)) {
            x = pack(problem.initial_point, lay);
            have_start = true;
        }
    }

    int newton_total = 0;
    if (!have_start) {
        // Feasibility phase: minimize the uniform slack.
        int slack_var = -1;
        MaxDetProblem p1 = make_phase1(problem, slack_var);
        Engine e1(p1, settings);
        const Layout& lay1 = e1.layout();
        const int slack_off = lay1.offset[slack_var];

        Eigen::VectorXd x1 = Eigen::VectorXd::Zero(lay1.total);
        // Lift the slack until every shifted constraint is strictly inside.
        double s0 = 0.0;
        {
            std::vector<Eigen::MatrixXd> zeros;
            for (const auto& v : problem.variables) {
                zeros.push_back(Eigen::MatrixXd::Zero(v.dim, v.dim));
            }
            for (const auto& c : problem.constraints) {
                s0 = std::max(s0, -sym_min_eigenvalue(c.evaluate(zeros)));
            }
            for (const auto& t : problem.objective) {
                s0 = std::max(s0, -sym_min_eigenvalue(t.expr.evaluate(zeros)));
            }
        }
        x1(slack_off) = s0 + 1.0;

        const double margin = settings.phase1_margin;
        auto monitor = [&](const Eigen::VectorXd& xc, double gap) {
            const double s = xc(slack_off);
            if (s < -2.0 * margin) return 1;            // feasible point found
            if (s - gap > margin) return 2;             // provably infeasible
            return 0;
        };
        double gap1 = std::numeric_limits<double>::infinity();
        const int rc = e1.run_path(x1, 0.05 * margin, newton_total, gap1, monitor);
        const double s_final = x1(slack_off);
        if (rc == 2) {
            out.status = SolveStatus::numerical_failure;
            out.iterations = newton_total;
            out.message = "feasibility phase did not converge";
            return out;
        }
        if (s_final < 0.0) {
            x = x1.head(lay.total);
            const auto vals = unpack(x, lay);
            if (!engine.strictly_feasible(vals)) {
                out.status = SolveStatus::numerical_failure;
                out.iterations = newton_total;
                out.message = "feasibility phase produced a boundary point";
                return out;
            }
            have_start = true;
        } else if (s_final > margin) {
            out.status = SolveStatus::infeasible;
            out.iterations = newton_total;
            out.infeasibility = s_final;
            std::ostringstream os;
            os << "infeasible: minimum uniform constraint violation " << s_final;
            out.message = os.str();
            return out;
        } else {
            out.status = SolveStatus::numerical_failure;
            out.iterations = newton_total;
            out.infeasibility = s_final;
            out.message = "feasibility phase inconclusive: slack within margin of zero";
            return out;
        }
    }

    double gap = 0.0;
    const int rc = engine.run_path(x, 0.5 * settings.tolerance, newton_total, gap,
                                   nullptr);
    out.iterations = newton_total;
    if (rc != 0) {
        out.status = SolveStatus::numerical_failure;
        out.message = "barrier path did not reach the target gap";
        return out;
    }
    out.values = unpack(x, lay);
    for (auto& v : out.values) v = symmetrized(v);
    out.objective_nats = engine.objective_value(x);
    out.gap_estimate = gap;
    out.status = std::isfinite(out.objective_nats)
                     ? SolveStatus::optimal
                     : SolveStatus::numerical_failure;
    engine.fill_certificate(out.values, out);
    if (out.status != SolveStatus::optimal) {
        out.message = "objective evaluation failed at the final iterate";
    }
    return out;
}

}  // namespace ratelqg
