#include "heartsteps/baselines.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/selector.hpp"

#include <cmath>

namespace heartsteps {

namespace {

Eigen::VectorXd bandit_feature(const FeaturePair& pair, int action) {
    Eigen::VectorXd x(pair.g.size() + pair.f.size());
    x << pair.g, static_cast<double>(action) * pair.f;
    return x;
}

}  // namespace

BanditBelief BanditBelief::from_blocks(const GaussianBelief& alpha, const GaussianBelief& beta) {
    const Eigen::Index dg = alpha.dim();
    const Eigen::Index df = beta.dim();
    BanditBelief out;
    out.dim_g = dg;
    out.dim_f = df;
    out.theta.mean.resize(dg + df);
    out.theta.mean << alpha.mean, beta.mean;
    out.theta.cov = Eigen::MatrixXd::Zero(dg + df, dg + df);
    out.theta.cov.topLeftCorner(dg, dg) = alpha.cov;
    out.theta.cov.bottomRightCorner(df, df) = beta.cov;
    return out;
}

GaussianBelief BanditBelief::beta() const { return extract_beta(theta, dim_f); }

double bandit_prob(const FeaturePair& pair, const BanditBelief& belief) {
    if (pair.g.size() != belief.dim_g || pair.f.size() != belief.dim_f)
        throw InvalidArgument("feature dimensions do not match the bandit belief");
    // Arms share g' alpha, so arm 1 wins exactly when f' beta > 0.
    return treatment_prob(pair.f, belief.beta(), 0.0);
}

BanditBelief bandit_update(std::span<const HistoryRecord> history, const FeatureMap& features,
                           const BanditBelief& prior, double sigma2) {
    ConjugateAccumulator acc(prior.theta, sigma2);
    for (std::size_t i = 0; i < history.size(); ++i) {
        const HistoryRecord& rec = history[i];
        if (!rec.context.available) continue;
        if (!std::isfinite(rec.reward))
            throw InvalidArgument("non-finite reward in history record " + std::to_string(i));
        acc.add(bandit_feature(features(rec.context.raw, rec.context.dosage), rec.action),
                rec.reward);
    }
    BanditBelief out = prior;
    if (acc.count() > 0) out.theta = acc.posterior();
    return out;
}

ThompsonBandit::ThompsonBandit(AlgoConfig cfg, FeatureMap features, BanditBelief prior)
    : cfg_(cfg),
      features_(std::move(features)),
      prior_(std::move(prior)),
      acc_(prior_.theta, cfg_.sigma2) {
    cfg_.validate();
    if (prior_.dim_g != kDimG || prior_.dim_f != kDimF)
        throw InvalidArgument("bandit prior does not match the feature layout");
    reset();
}

void ThompsonBandit::reset() {
    belief_ = prior_;
    beta_ = belief_.beta();
    acc_ = ConjugateAccumulator(prior_.theta, cfg_.sigma2);
    consumed_ = 0;
}

Decision ThompsonBandit::decide(const DecisionContext& ctx, std::mt19937_64& rng) {
    if (!ctx.available) throw InvalidArgument("bandit asked to act at an unavailable time");
    const FeaturePair pair = features_(ctx.raw, ctx.dosage);
    Decision d;
    d.pre_clip = treatment_prob(pair.f, beta_, 0.0);
    d.pi = clip_probability(d.pre_clip, cfg_.epsilon0, cfg_.epsilon1);
    d.action = bernoulli_action(d.pi, rng);
    return d;
}

void ThompsonBandit::nightly(std::span<const HistoryRecord> history) {
    if (history.size() < consumed_) throw InvalidArgument("history shrank between nightly updates");
    for (std::size_t i = consumed_; i < history.size(); ++i) {
        const HistoryRecord& rec = history[i];
        if (!rec.context.available) continue;
        acc_.add(bandit_feature(features_(rec.context.raw, rec.context.dosage), rec.action),
                 rec.reward);
    }
    consumed_ = history.size();
    if (acc_.count() > 0) belief_.theta = acc_.posterior();
    beta_ = belief_.beta();
}

double ThompsonBandit::effect_mean(const DecisionContext& ctx) const {
    return features_(ctx.raw, ctx.dosage).f.dot(beta_.mean);
}

}  // namespace heartsteps
