#pragma once

#include "heartsteps/core.hpp"
#include "heartsteps/proxy.hpp"

#include <Eigen/Core>

#include <random>

namespace heartsteps {

/// Result of one randomized decision at an available time.
struct SelectionOutcome {
    double pi = 0.0;        // clipped probability of sending
    int action = 0;
    double pre_clip = 0.0;  // Pr{f' beta > eta} before clipping
    double eta_used = 0.0;
    double effect_mean = 0.0;  // f' mu, the posterior mean treatment effect
};

/// Pr{f' beta > eta} for beta ~ N(mean, cov), in closed form. A degenerate
/// belief (f' cov f == 0) gives 1, 0, or 0.5 on a tie.
double treatment_prob(const Eigen::VectorXd& f, const GaussianBelief& beta_belief, double eta);

/// Draws A ~ Bernoulli(pi) from exactly one uniform of `rng`.
int bernoulli_action(double pi, std::mt19937_64& rng);

/// Thompson-sampling probability against the delayed-effect proxy at the
/// context's dosage, clipped, then one Bernoulli draw. Throws if the context
/// is unavailable.
SelectionOutcome select_action(const DecisionContext& ctx, const GaussianBelief& beta_belief,
                               const ProxyTables& tables, const AlgoConfig& cfg,
                               const FeatureMap& features, std::mt19937_64& rng);

}  // namespace heartsteps
