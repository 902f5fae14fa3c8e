#include "heartsteps/posterior.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace heartsteps {

namespace {

void check_sigma2(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw InvalidArgument("sigma2 must be positive and finite");
}

void check_reward(const HistoryRecord& rec, std::size_t index) {
    if (!std::isfinite(rec.reward))
        throw InvalidArgument("non-finite reward in history record " + std::to_string(index) +
                              " (day " + std::to_string(rec.context.day) + ", slot " +
                              std::to_string(rec.context.slot) + ")");
}

}  // namespace

JointPrior JointPrior::from_blocks(const GaussianBelief& alpha0, const GaussianBelief& beta) {
    const Eigen::Index dg = alpha0.dim();
    const Eigen::Index df = beta.dim();
    if (alpha0.cov.rows() != dg || beta.cov.rows() != df)
        throw InvalidArgument("prior block covariance does not match its mean");
    JointPrior out;
    out.dim_g = dg;
    out.dim_f = df;
    out.mu_bar.resize(dg + 2 * df);
    out.mu_bar << alpha0.mean, beta.mean, beta.mean;
    out.sigma_bar = Eigen::MatrixXd::Zero(dg + 2 * df, dg + 2 * df);
    out.sigma_bar.block(0, 0, dg, dg) = alpha0.cov;
    out.sigma_bar.block(dg, dg, df, df) = beta.cov;
    out.sigma_bar.block(dg + df, dg + df, df, df) = beta.cov;
    return out;
}

Eigen::VectorXd joint_feature(const FeaturePair& pair, double pi, int action) {
    const Eigen::Index dg = pair.g.size();
    const Eigen::Index df = pair.f.size();
    Eigen::VectorXd phi(dg + 2 * df);
    phi.head(dg) = pair.g;
    phi.segment(dg, df) = pi * pair.f;
    phi.tail(df) = (static_cast<double>(action) - pi) * pair.f;
    return phi;
}

ConjugateAccumulator::ConjugateAccumulator(const GaussianBelief& prior, double sigma2) {
    check_sigma2(sigma2);
    if (prior.cov.rows() != prior.dim() || prior.cov.cols() != prior.dim())
        throw InvalidArgument("prior covariance does not match its mean");
    precision_ = linalg::spd_inverse_strict(prior.cov, "prior covariance");
    shift_ = precision_ * prior.mean;
    inv_sigma2_ = 1.0 / sigma2;
}

void ConjugateAccumulator::add(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
    if (x.size() != shift_.size())
        throw InvalidArgument("feature dimension does not match the prior");
    if (!std::isfinite(y)) throw InvalidArgument("non-finite response");
    precision_.selfadjointView<Eigen::Lower>().rankUpdate(x, inv_sigma2_);
    shift_.noalias() += (inv_sigma2_ * y) * x;
    ++count_;
}

GaussianBelief ConjugateAccumulator::posterior() const {
    // Only the lower triangle of precision_ is maintained by rankUpdate.
    Eigen::MatrixXd full = precision_.selfadjointView<Eigen::Lower>();
    Eigen::MatrixXd cov = linalg::spd_inverse(full);
    Eigen::VectorXd mean = cov * shift_;
    return {std::move(mean), std::move(cov)};
}

GaussianBelief conjugate_posterior(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                   const GaussianBelief& prior, double sigma2) {
    if (design.rows() != y.size()) throw InvalidArgument("design rows do not match responses");
    if (design.rows() > 0 && design.cols() != prior.dim())
        throw InvalidArgument("design columns do not match the prior");
    ConjugateAccumulator acc(prior, sigma2);
    for (Eigen::Index i = 0; i < design.rows(); ++i) acc.add(design.row(i).transpose(), y(i));
    return acc.posterior();
}

GaussianBelief posterior_joint(std::span<const HistoryRecord> history, const FeatureMap& features,
                               const JointPrior& prior, double sigma2) {
    ConjugateAccumulator acc(prior.belief(), sigma2);
    for (std::size_t i = 0; i < history.size(); ++i) {
        const HistoryRecord& rec = history[i];
        if (!rec.context.available) continue;
        check_reward(rec, i);
        const FeaturePair pair = features(rec.context.raw, rec.context.dosage);
        acc.add(joint_feature(pair, rec.pi, rec.action), rec.reward);
    }
    if (acc.count() == 0) return prior.belief();
    return acc.posterior();
}

GaussianBelief extract_beta(const GaussianBelief& joint, Eigen::Index p) {
    const Eigen::Index n = joint.dim();
    if (p <= 0 || p > n || joint.cov.rows() != n || joint.cov.cols() != n)
        throw InvalidArgument("cannot extract " + std::to_string(p) +
                              " trailing entries from a belief of dimension " +
                              std::to_string(n));
    return {joint.mean.tail(p), joint.cov.bottomRightCorner(p, p)};
}

GaussianBelief fit_unavailable(std::span<const HistoryRecord> history,
                               const FeatureMap& features, const GaussianBelief& prior_g,
                               double sigma2) {
    ConjugateAccumulator acc(prior_g, sigma2);
    for (std::size_t i = 0; i < history.size(); ++i) {
        const HistoryRecord& rec = history[i];
        if (rec.context.available) continue;
        check_reward(rec, i);
        acc.add(features(rec.context.raw, rec.context.dosage).g, rec.reward);
    }
    if (acc.count() == 0) return prior_g;
    return acc.posterior();
}

}  // namespace heartsteps
