#pragma once

#include <Eigen/Dense>

namespace ratelqg {

/// Returns (M + M^T) / 2.
Eigen::MatrixXd symmetrized(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// Smallest eigenvalue of the symmetric part of M.
double sym_min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// Largest absolute eigenvalue of a (generally nonsymmetric) square matrix.
double spectral_radius(const Eigen::Ref<const Eigen::MatrixXd>& A);

/// Symmetric square root of a PSD matrix; eigenvalues below
/// 1e-12 * max(1, lambda_max) are clamped to zero before the root is taken.
Eigen::MatrixXd psd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// log(det(M)) for symmetric positive definite M; throws SolverFailure if the
/// Cholesky factorization fails.
double logdet_pd(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// log(|det(M)|) for a square matrix, computed from an LU factorization.
/// Returns -inf when M is exactly singular.
double log_abs_det(const Eigen::Ref<const Eigen::MatrixXd>& M);

/// True when the Cholesky factorization of the symmetric part succeeds, i.e.
/// the matrix is numerically positive definite.
bool is_positive_definite(const Eigen::Ref<const Eigen::MatrixXd>& M);

}  // namespace ratelqg
