#include "ratelqg/kalman.hpp"

#include <cmath>
#include <sstream>

#include "ratelqg/errors.hpp"
#include "ratelqg/matrix_util.hpp"

namespace ratelqg {

namespace {

double inf_norm(const Eigen::MatrixXd& M) {
    return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

Eigen::MatrixXd pd_inverse(const Eigen::MatrixXd& M, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(M));
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument(std::string(what) +
                                    " is not positive definite");
    }
    return llt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
}

}  // namespace

std::vector<Eigen::MatrixXd> snr_from_schedule(const CovarianceSchedule& schedule) {
    if (schedule.P_filt.empty() || schedule.P_filt.size() != schedule.P_pred.size()) {
        throw std::invalid_argument(
            "snr_from_schedule: schedule must carry matching nonempty covariance lists");
    }
    std::vector<Eigen::MatrixXd> out;
    out.reserve(schedule.P_filt.size());
    for (std::size_t i = 0; i < schedule.P_filt.size(); ++i) {
        const Eigen::MatrixXd snr =
            symmetrized(pd_inverse(schedule.P_filt[i], "filter covariance") -
                        pd_inverse(schedule.P_pred[i], "predictor covariance"));
        const double scale = 1.0 + inf_norm(snr);
        Eigen::SelfAdjointEigenSolver<Eigen::SelfAdjointEigenSolver<
            Eigen::MatrixXd>::MatrixType> es(snr);
        if (es.eigenvalues().minCoeff() < -1e-8 * scale) {
            std::ostringstream os;
            os << "snr_from_schedule: schedule violates the filter ordering at "
               << "stage " << i + 1 << " (information gain has eigenvalue "
               << es.eigenvalues().minCoeff() << ")";
            throw std::invalid_argument(os.str());
        }
        Eigen::VectorXd lambda = es.eigenvalues().cwiseMax(0.0);
        out.push_back(symmetrized(es.eigenvectors() * lambda.asDiagonal() *
                                  es.eigenvectors().transpose()));
    }
    return out;
}

SensorDesign factor_snr(const Eigen::Ref<const Eigen::MatrixXd>& SNR,
                        double rel_threshold) {
    if (SNR.rows() != SNR.cols()) {
        throw std::invalid_argument("factor_snr: input must be square");
    }
    SensorDesign design;
    design.SNR = symmetrized(SNR);
    const Eigen::Index n = SNR.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(design.SNR);
    const double lam_max = std::max(0.0, es.eigenvalues().maxCoeff());
    const double cut = rel_threshold * lam_max;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = n - 1; i >= 0; --i) {  // descending order
        const double lam = es.eigenvalues()(i);
        if (lam > 0.0 && lam >= cut) kept.push_back(i);
    }
    design.rank = static_cast<int>(kept.size());
    design.C.resize(design.rank, n);
    design.V = Eigen::MatrixXd::Zero(design.rank, design.rank);
    for (int r = 0; r < design.rank; ++r) {
        design.C.row(r) = es.eigenvectors().col(kept[r]).transpose();
        design.V(r, r) = 1.0 / es.eigenvalues()(kept[r]);
    }
    return design;
}

Eigen::MatrixXd kalman_gain(const Eigen::Ref<const Eigen::MatrixXd>& P_pred,
                            const Eigen::Ref<const Eigen::MatrixXd>& C,
                            const Eigen::Ref<const Eigen::MatrixXd>& V) {
    const Eigen::Index n = P_pred.rows();
    const Eigen::Index r = C.rows();
    if (r == 0) return Eigen::MatrixXd(n, 0);
    const Eigen::MatrixXd S = symmetrized(C * P_pred * C.transpose() + V);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
        throw SolverFailure("kalman_gain: innovation covariance is singular");
    }
    return llt.solve(C * P_pred).transpose();
}

PreKFDesign prekf_design(const PartiallyObservedPlant& plant) {
    const int T = plant.base.horizon;
    const Eigen::Index n = plant.state_dim();
    PreKFDesign design;
    design.Ltilde.resize(T + 1);
    design.Ptilde_filt.resize(T + 1);
    design.Ptilde_pred.resize(T + 1);
    design.Psi.resize(T);

    Eigen::MatrixXd Ppred = symmetrized(plant.base.P_init);
    for (int t = 1; t <= T + 1; ++t) {
        const Eigen::MatrixXd& H = plant.H_at(t);
        const Eigen::MatrixXd& G = plant.G_at(t);
        const Eigen::MatrixXd Sy = symmetrized(H * Ppred * H.transpose() + G);
        Eigen::LLT<Eigen::MatrixXd> llt(Sy);
        if (llt.info() != Eigen::Success) {
            std::ostringstream os;
            os << "prekf_design: innovation covariance singular at stage " << t;
            throw SolverFailure(os.str());
        }
        const Eigen::MatrixXd L = llt.solve(H * Ppred).transpose();
        design.Ltilde[t - 1] = L;
        design.Ptilde_pred[t - 1] = Ppred;
        design.Ptilde_filt[t - 1] =
            symmetrized((Eigen::MatrixXd::Identity(n, n) - L * H) * Ppred);
        if (t >= 2) {
            design.Psi[t - 2] = symmetrized(L * Sy * L.transpose());
        }
        if (t <= T) {
            const Eigen::MatrixXd& A = plant.base.A[t - 1];
            Ppred = symmetrized(A * design.Ptilde_filt[t - 1] * A.transpose() +
                                plant.base.W[t - 1]);
        }
    }
    return design;
}

Eigen::VectorXd prekf_inverse(const Eigen::VectorXd& xtilde_t,
                              const Eigen::VectorXd& xtilde_prev,
                              const Eigen::VectorXd& u_prev,
                              const PreKFDesign& design,
                              const PartiallyObservedPlant& plant, int t) {
    const int T = plant.base.horizon;
    if (t < 1 || t > T) {
        throw std::invalid_argument("prekf_inverse: stage out of range");
    }
    const Eigen::Index n = plant.state_dim();
    const Eigen::MatrixXd& L = design.Ltilde[t - 1];
    const Eigen::MatrixXd& H = plant.H_at(t);
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(n);
    if (t > 1) {
        pred = plant.base.A[t - 2] * xtilde_prev + plant.base.B[t - 2] * u_prev;
    }
    const Eigen::MatrixXd LtL = L.transpose() * L;
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(LtL));
    if (llt.info() != Eigen::Success) {
        throw SolverFailure("prekf_inverse: filter gain lost column rank");
    }
    const Eigen::VectorXd rhs =
        L.transpose() *
        (xtilde_t + (L * H - Eigen::MatrixXd::Identity(n, n)) * pred);
    return llt.solve(rhs);
}

POReduction reduce_po_plant(const PartiallyObservedPlant& plant,
                            const PreKFDesign& design) {
    const int T = plant.base.horizon;
    POReduction red;
    red.reduced.horizon = T;
    red.reduced.A = plant.base.A;
    red.reduced.B = plant.base.B;
    red.reduced.Q = plant.base.Q;
    red.reduced.R = plant.base.R;
    red.reduced.W = design.Psi;

    const Eigen::MatrixXd& H1 = plant.H_at(1);
    const Eigen::MatrixXd& G1 = plant.G_at(1);
    const Eigen::MatrixXd Sy1 =
        symmetrized(H1 * plant.base.P_init * H1.transpose() + G1);
    red.reduced.P_init = symmetrized(design.Ltilde[0] * Sy1 *
                                     design.Ltilde[0].transpose());

    red.cost_offset = 0.0;
    for (int t = 1; t <= T; ++t) {
        // The filtering error at stage t+1 contributes its Q-weighted trace.
        red.cost_offset +=
            (plant.base.Q[t - 1] * design.Ptilde_filt[t]).trace();
    }
    return red;
}

}  // namespace ratelqg
