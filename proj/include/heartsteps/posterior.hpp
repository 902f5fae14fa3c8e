#pragma once

#include "heartsteps/core.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>

namespace heartsteps {

/// Prior over theta = (alpha0, alpha1, beta) of the action-centered working
/// model. alpha1 shares beta's prior, so the stacked mean is
/// (mu_alpha0, mu_beta, mu_beta) and the covariance is block diagonal.
struct JointPrior {
    Eigen::VectorXd mu_bar;
    Eigen::MatrixXd sigma_bar;
    Eigen::Index dim_g = 0;
    Eigen::Index dim_f = 0;

    static JointPrior from_blocks(const GaussianBelief& alpha0, const GaussianBelief& beta);
    GaussianBelief belief() const { return {mu_bar, sigma_bar}; }
};

/// phi(S, A) = (g, pi * f, (A - pi) * f).
Eigen::VectorXd joint_feature(const FeaturePair& pair, double pi, int action);

/// Closed-form Gaussian posterior for y = X theta + N(0, sigma2), theta ~ prior.
/// Rows of `design` are observations.
GaussianBelief conjugate_posterior(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                   const GaussianBelief& prior, double sigma2);

/// Running sufficient statistics for the conjugate update: precision
/// Sigma0^-1 + X^T X / sigma2 and shift Sigma0^-1 mu0 + X^T y / sigma2.
/// Adding rows one at a time gives the same posterior as the batch formula.
class ConjugateAccumulator {
public:
    ConjugateAccumulator(const GaussianBelief& prior, double sigma2);

    void add(const Eigen::Ref<const Eigen::VectorXd>& x, double y);
    GaussianBelief posterior() const;

    std::size_t count() const { return count_; }
    Eigen::Index dim() const { return shift_.size(); }

private:
    Eigen::MatrixXd precision_;
    Eigen::VectorXd shift_;
    double inv_sigma2_;
    std::size_t count_ = 0;
};

/// Posterior of theta given every available record in `history`.
/// Unavailable records are skipped. Throws on a non-finite reward, naming
/// the offending record.
GaussianBelief posterior_joint(std::span<const HistoryRecord> history, const FeatureMap& features,
                               const JointPrior& prior, double sigma2);

/// Last p entries of the mean and bottom-right p x p block of the covariance.
GaussianBelief extract_beta(const GaussianBelief& joint, Eigen::Index p);

/// Baseline-only regression (features g) on the unavailable records.
GaussianBelief fit_unavailable(std::span<const HistoryRecord> history,
                               const FeatureMap& features, const GaussianBelief& prior_g,
                               double sigma2);

}  // namespace heartsteps
