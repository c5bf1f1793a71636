#include "ratelqg/matrix_util.hpp"

#include <cmath>
#include <limits>

#include "ratelqg/errors.hpp"

namespace ratelqg {

Eigen::MatrixXd symmetrized(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    return 0.5 * (M + M.transpose());
}

double sym_min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(M),
                                                      Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double spectral_radius(const Eigen::Ref<const Eigen::MatrixXd>& A) {
    if (A.rows() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd psd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    if (M.rows() == 0) return Eigen::MatrixXd(0, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrized(M));
    Eigen::VectorXd lambda = es.eigenvalues();
    const double floor = 1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        lambda(i) = lambda(i) < floor ? 0.0 : lambda(i);
    }
    return es.eigenvectors() * lambda.cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

double logdet_pd(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(M));
    if (llt.info() != Eigen::Success) {
        throw SolverFailure("logdet_pd: matrix is not positive definite");
    }
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double log_abs_det(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        const double d = std::abs(lu.matrixLU()(i, i));
        if (d == 0.0) return -std::numeric_limits<double>::infinity();
        acc += std::log(d);
    }
    return acc;
}

bool is_positive_definite(const Eigen::Ref<const Eigen::MatrixXd>& M) {
    if (M.rows() == 0) return true;
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(M));
    return llt.info() == Eigen::Success;
}

}  // namespace ratelqg
