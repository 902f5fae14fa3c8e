#include "heartsteps/selector.hpp"

#include "heartsteps/error.hpp"

#include <cmath>

namespace heartsteps {

double treatment_prob(const Eigen::VectorXd& f, const GaussianBelief& beta_belief, double eta) {
    if (f.size() != beta_belief.dim() || beta_belief.cov.rows() != f.size())
        throw InvalidArgument("feature dimension does not match the treatment-effect belief");
    const double mean = f.dot(beta_belief.mean);
    const double var = f.dot(beta_belief.cov * f);
    if (var < 0.0 && var < -1e-12 * std::max(1.0, f.squaredNorm()))
        throw NumericalError("negative treatment-effect variance");
    if (var <= 0.0) {
        if (mean > eta) return 1.0;
        if (mean < eta) return 0.0;
        return 0.5;
    }
    // 1 - Phi((eta - mean) / sd)
    return 0.5 * std::erfc((eta - mean) / std::sqrt(2.0 * var));
}

int bernoulli_action(double pi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return unif(rng) < pi ? 1 : 0;
}

SelectionOutcome select_action(const DecisionContext& ctx, const GaussianBelief& beta_belief,
                               const ProxyTables& tables, const AlgoConfig& cfg,
                               const FeatureMap& features, std::mt19937_64& rng) {
    if (!ctx.available)
        throw InvalidArgument("select_action called at an unavailable decision time");
    const FeaturePair pair = features(ctx.raw, ctx.dosage);
    SelectionOutcome out;
    out.eta_used = eta_lookup(tables, ctx.dosage);
    out.effect_mean = pair.f.dot(beta_belief.mean);
    out.pre_clip = treatment_prob(pair.f, beta_belief, out.eta_used);
    out.pi = clip_probability(out.pre_clip, cfg.epsilon0, cfg.epsilon1);
    out.action = bernoulli_action(out.pi, rng);
    return out;
}

}  // namespace heartsteps
