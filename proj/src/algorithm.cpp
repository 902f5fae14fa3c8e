#include "heartsteps/algorithm.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/selector.hpp"

namespace heartsteps {

std::shared_ptr<const AlgorithmInputs> make_algorithm_inputs(const AlgoConfig& cfg,
                                                             const FeatureMap& features,
                                                             const JointPrior& prior,
                                                             const GaussianBelief& unavail_prior,
                                                             const FutureValue& h1) {
    cfg.validate();
    if (prior.dim_g != kDimG || prior.dim_f != kDimF)
        throw InvalidArgument("joint prior does not match the feature layout");
    if (unavail_prior.dim() != kDimG)
        throw InvalidArgument("unavailable-time prior does not match the g layout");
    auto in = std::make_shared<AlgorithmInputs>();
    in->cfg = cfg;
    in->features = features;
    in->prior = prior;
    in->unavail_prior = unavail_prior;
    in->kernel = DosageKernel(h1.grid, cfg.lambda, cfg.p_sed);
    in->h1 = h1;
    in->initial = initial_tables(h1, cfg.gamma);
    return in;
}

HeartStepsAlgorithm::HeartStepsAlgorithm(std::shared_ptr<const AlgorithmInputs> inputs,
                                         Proxy proxy)
    : in_(std::move(inputs)),
      proxy_(proxy),
      zero_(zero_tables(in_->h1.grid)),
      joint_acc_(in_->prior.belief(), in_->cfg.sigma2),
      unavail_acc_(in_->unavail_prior, in_->cfg.sigma2) {
    reset();
}

void HeartStepsAlgorithm::reset() {
    joint_acc_ = ConjugateAccumulator(in_->prior.belief(), in_->cfg.sigma2);
    unavail_acc_ = ConjugateAccumulator(in_->unavail_prior, in_->cfg.sigma2);
    moments_ = ContextMomentsAccumulator();
    consumed_ = 0;
    available_ = 0;
    joint_ = in_->prior.belief();
    beta_ = extract_beta(joint_, in_->prior.dim_f);
    tables_ = proxy_ == Proxy::Enabled ? in_->initial : zero_;
    solver_ = {};
}

Decision HeartStepsAlgorithm::decide(const DecisionContext& ctx, std::mt19937_64& rng) {
    const SelectionOutcome s = select_action(ctx, beta_, tables_, in_->cfg, in_->features, rng);
    return {s.pre_clip, s.pi, s.action, s.eta_used};
}

void HeartStepsAlgorithm::nightly(std::span<const HistoryRecord> history) {
    if (history.size() < consumed_) throw InvalidArgument("history shrank between nightly updates");
    const FeatureMap& fm = in_->features;
    for (std::size_t i = consumed_; i < history.size(); ++i) {
        const HistoryRecord& rec = history[i];
        const FeaturePair pair = fm(rec.context.raw, rec.context.dosage);
        if (rec.context.available) {
            joint_acc_.add(joint_feature(pair, rec.pi, rec.action), rec.reward);
            ++available_;
        } else {
            unavail_acc_.add(pair.g, rec.reward);
        }
        moments_.add(rec.context.raw, fm);
    }
    consumed_ = history.size();
    if (joint_acc_.count() > 0) joint_ = joint_acc_.posterior();
    beta_ = extract_beta(joint_, in_->prior.dim_f);

    if (proxy_ == Proxy::Disabled) return;
    const AlgoConfig& cfg = in_->cfg;
    if (cfg.w == 0.0 || cfg.gamma == 0.0 || consumed_ == 0) {
        // H = H1 exactly; H* carries zero weight.
        tables_ = in_->initial;
        return;
    }
    const GaussianBelief unavail =
        unavail_acc_.count() > 0 ? unavail_acc_.posterior() : in_->unavail_prior;
    RewardCoefficients coef;
    coef.alpha_avail = joint_.mean.head(in_->prior.dim_g);
    coef.beta = joint_.mean.tail(in_->prior.dim_f);
    coef.alpha_unavail = unavail.mean;
    const double p_avail = static_cast<double>(available_) / static_cast<double>(consumed_);
    const MarginalRewards rewards =
        marginal_rewards(moments_.moments(), coef, in_->kernel.grid(), cfg.lambda);
    ValueSolution sol =
        solve_value_policy_iteration(rewards, in_->kernel, p_avail, cfg.gamma, solver_);
    FutureValue star;
    star.grid = in_->kernel.grid();
    star.H = compute_H(sol.V, in_->kernel, p_avail);
    star.V = std::move(sol.V);
    star.p_avail = p_avail;
    tables_ = blend_and_eta(star, in_->h1, cfg.w, cfg.gamma);
}

double HeartStepsAlgorithm::effect_mean(const DecisionContext& ctx) const {
    return in_->features(ctx.raw, ctx.dosage).f.dot(beta_.mean);
}

}  // namespace heartsteps
