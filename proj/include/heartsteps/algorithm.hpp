#pragma once

#include "heartsteps/core.hpp"
#include "heartsteps/env.hpp"
#include "heartsteps/posterior.hpp"
#include "heartsteps/proxy.hpp"

#include <memory>

namespace heartsteps {

/// Everything the online algorithm needs on day 1. Shared read-only across
/// replications.
struct AlgorithmInputs {
    AlgoConfig cfg;
    FeatureMap features;
    JointPrior prior;                 // (alpha0, alpha1, beta) at available times
    GaussianBelief unavail_prior;     // g coefficients at unavailable times
    DosageKernel kernel;
    FutureValue h1;                   // initial future value from historical data
    ProxyTables initial;              // day-1 tables: H = H1, eta = gamma (H1(.,0) - H1(.,1))
};

/// Assembles AlgorithmInputs, validating dimensions and building the kernel.
std::shared_ptr<const AlgorithmInputs> make_algorithm_inputs(const AlgoConfig& cfg,
                                                             const FeatureMap& features,
                                                             const JointPrior& prior,
                                                             const GaussianBelief& unavail_prior,
                                                             const FutureValue& h1);

/// Action-centered Thompson sampling with the dosage-based delayed-effect
/// proxy. With the proxy disabled, eta is held at zero and the rule reduces
/// to an action-centered Thompson-sampling bandit.
class HeartStepsAlgorithm : public Policy {
public:
    enum class Proxy { Enabled, Disabled };

    explicit HeartStepsAlgorithm(std::shared_ptr<const AlgorithmInputs> inputs,
                                 Proxy proxy = Proxy::Enabled);

    void reset() override;
    Decision decide(const DecisionContext& ctx, std::mt19937_64& rng) override;
    /// Consumes the records appended since the previous call; the posterior
    /// equals the batch posterior over the whole history.
    void nightly(std::span<const HistoryRecord> history) override;
    double effect_mean(const DecisionContext& ctx) const override;

    const GaussianBelief& joint_belief() const { return joint_; }
    const GaussianBelief& beta_belief() const { return beta_; }
    const ProxyTables& tables() const { return tables_; }

private:
    std::shared_ptr<const AlgorithmInputs> in_;
    Proxy proxy_;
    ProxyTables zero_;
    ConjugateAccumulator joint_acc_;
    ConjugateAccumulator unavail_acc_;
    ContextMomentsAccumulator moments_;
    std::size_t consumed_ = 0;
    std::size_t available_ = 0;
    GaussianBelief joint_;
    GaussianBelief beta_;
    ProxyTables tables_;
    PolicyIterationState solver_;  // last night's solution seeds the next solve
};

}  // namespace heartsteps
