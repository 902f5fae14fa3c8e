#include "heartsteps/linalg.hpp"

#include "heartsteps/error.hpp"

#include <Eigen/Cholesky>

#include <string>

namespace heartsteps::linalg {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    double jitter = 1e-9;
    for (int attempt = 0; llt.info() != Eigen::Success; ++attempt) {
        if (attempt == 6) throw NumericalError("matrix is not positive definite even with jitter");
        llt.compute(m + jitter * Eigen::MatrixXd::Identity(n, n));
        jitter *= 10.0;
    }
    return symmetrize(llt.solve(Eigen::MatrixXd::Identity(n, n)));
}

Eigen::MatrixXd spd_inverse_strict(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string(what) + " is singular or not positive definite");
    return symmetrize(llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols())));
}

}  // namespace heartsteps::linalg
