#pragma once

#include <Eigen/Core>

namespace heartsteps::linalg {

/// Inverse of a symmetric positive-definite matrix via Cholesky. When the
/// factorization fails, 1e-9 is added to the diagonal and the factorization
/// retried (a few times, growing the jitter tenfold each time).
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m);

/// Strict variant: throws NumericalError if `m` is not positive definite.
Eigen::MatrixXd spd_inverse_strict(const Eigen::MatrixXd& m, const char* what);

/// Returns (m + m^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

}  // namespace heartsteps::linalg
