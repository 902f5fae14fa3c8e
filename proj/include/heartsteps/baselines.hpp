#pragma once

#include "heartsteps/core.hpp"
#include "heartsteps/env.hpp"
#include "heartsteps/posterior.hpp"

#include <memory>
#include <span>

namespace heartsteps {

/// Gaussian belief over theta = (alpha, beta) for r(s, a) = g' alpha + a f' beta.
struct BanditBelief {
    GaussianBelief theta;
    Eigen::Index dim_g = kDimG;
    Eigen::Index dim_f = kDimF;

    static BanditBelief from_blocks(const GaussianBelief& alpha, const GaussianBelief& beta);
    GaussianBelief beta() const;
};

/// Probability that arm 1 beats arm 0: Pr{f' beta > 0}. Unclipped.
double bandit_prob(const FeaturePair& pair, const BanditBelief& belief);

/// Conjugate posterior over (alpha, beta) from the available records, with
/// features (g, a f).
BanditBelief bandit_update(std::span<const HistoryRecord> history, const FeatureMap& features,
                           const BanditBelief& prior, double sigma2);

/// Thompson-sampling contextual bandit maximizing the immediate reward,
/// clipped with the same constraints as the main algorithm.
class ThompsonBandit : public Policy {
public:
    ThompsonBandit(AlgoConfig cfg, FeatureMap features, BanditBelief prior);

    void reset() override;
    Decision decide(const DecisionContext& ctx, std::mt19937_64& rng) override;
    void nightly(std::span<const HistoryRecord> history) override;
    double effect_mean(const DecisionContext& ctx) const override;

    const BanditBelief& belief() const { return belief_; }

private:
    AlgoConfig cfg_;
    FeatureMap features_;
    BanditBelief prior_;
    BanditBelief belief_;
    GaussianBelief beta_;
    ConjugateAccumulator acc_;
    std::size_t consumed_ = 0;
};

}  // namespace heartsteps
