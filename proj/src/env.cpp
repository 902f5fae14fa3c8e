#include "heartsteps/env.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/rng.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace heartsteps {

namespace {

std::string fmt17(double v) {
    char buf[64];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace

ParticipantSequence extend_sequence(const ParticipantSequence& base, int slots_per_day,
                                    int target_days, std::mt19937_64& rng) {
    if (slots_per_day <= 0) throw InvalidArgument("slots_per_day must be positive");
    const std::size_t slots = static_cast<std::size_t>(slots_per_day);
    if (base.empty() || base.size() % slots != 0)
        throw InvalidArgument("base sequence must consist of complete days");
    const int base_days = static_cast<int>(base.size() / slots);
    if (target_days < base_days)
        throw InvalidArgument("target length is shorter than the base sequence");
    ParticipantSequence out = base;
    out.reserve(static_cast<std::size_t>(target_days) * slots);
    std::uniform_int_distribution<int> pick(0, base_days - 1);
    for (int d = base_days; d < target_days; ++d) {
        const std::size_t src = static_cast<std::size_t>(pick(rng)) * slots;
        out.insert(out.end(), base.begin() + static_cast<std::ptrdiff_t>(src),
                   base.begin() + static_cast<std::ptrdiff_t>(src + slots));
    }
    return out;
}

ParticipantEnv::ParticipantEnv(std::string user_id, ParticipantSequence sequence,
                               RewardCoefficients truth, FeatureMap features, double lambda,
                               double p_sed, int slots_per_day)
    : user_id_(std::move(user_id)),
      sequence_(std::move(sequence)),
      truth_(std::move(truth)),
      features_(std::move(features)),
      lambda_(lambda),
      p_sed_(p_sed),
      slots_per_day_(slots_per_day) {
    if (slots_per_day_ <= 0 || sequence_.size() % static_cast<std::size_t>(slots_per_day_) != 0)
        throw InvalidArgument("environment sequence must consist of complete days");
    if (truth_.alpha_avail.size() != kDimG || truth_.alpha_unavail.size() != kDimG ||
        truth_.beta.size() != kDimF)
        throw InvalidArgument("environment coefficients do not match the feature layout");
    for (const auto& s : sequence_) {
        if (!std::isfinite(s.residual)) throw InvalidArgument("non-finite residual in sequence");
    }
}

ParticipantEnv::Step ParticipantEnv::step(std::size_t t, int prev_action, double prev_dosage,
                                          std::mt19937_64& sed_rng) const {
    if (t < 1 || t > sequence_.size())
        throw InvalidArgument("time index " + std::to_string(t) + " outside 1.." +
                              std::to_string(sequence_.size()));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Step out;
    out.anti_sedentary = unif(sed_rng) < p_sed_;
    out.t = t;
    out.env = this;
    const TimestepData& data = sequence_[t - 1];
    const int slots = slots_per_day_;
    out.context.day = static_cast<int>((t - 1) / static_cast<std::size_t>(slots)) + 1;
    out.context.slot = static_cast<int>((t - 1) % static_cast<std::size_t>(slots)) + 1;
    out.context.available = data.available;
    out.context.raw = data.raw;
    out.context.dosage =
        t == 1 ? 0.0
               : update_dosage(prev_dosage, prev_action == 1 || out.anti_sedentary, lambda_);
    return out;
}

double ParticipantEnv::reward(std::size_t t, const DecisionContext& ctx, int action) const {
    const TimestepData& data = sequence_.at(t - 1);
    const FeaturePair x = features_(ctx.raw, ctx.dosage);
    if (!ctx.available) return x.g.dot(truth_.alpha_unavail) + data.residual;
    return x.g.dot(truth_.alpha_avail) + action * x.f.dot(truth_.beta) + data.residual;
}

ParticipantEnv make_env(std::span<const CorpusRow> rows, const RewardCoefficients& truth,
                        const FeatureMap& features, const AlgoConfig& cfg,
                        std::uint64_t extension_seed) {
    if (rows.empty()) throw InvalidArgument("participant has no rows");
    ParticipantSequence base;
    base.reserve(rows.size());
    for (const auto& r : rows) base.push_back({r.raw, r.available, r.residual});
    std::mt19937_64 rng(extension_seed);
    ParticipantSequence full = extend_sequence(base, cfg.slots_per_day, cfg.n_days, rng);
    return ParticipantEnv(rows.front().user_id, std::move(full), truth, features, cfg.lambda,
                          cfg.p_sed, cfg.slots_per_day);
}

HistoryLog Trajectory::records() const {
    HistoryLog out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.record);
    return out;
}

Trajectory run_episode(const ParticipantEnv& env, Policy& policy, const AlgoConfig& cfg,
                       std::uint64_t seed) {
    if (env.slots_per_day() != cfg.slots_per_day)
        throw InvalidArgument("environment and configuration disagree on slots per day");
    std::mt19937_64 sed_rng(derive_seed(seed, {1}));
    std::mt19937_64 action_rng(derive_seed(seed, {2}));
    policy.reset();

    Trajectory traj;
    traj.steps.reserve(env.horizon());
    HistoryLog history;
    history.reserve(env.horizon());
    double day_total = 0.0;
    int prev_action = 0;
    double prev_dosage = 0.0;
    for (std::size_t t = 1; t <= env.horizon(); ++t) {
        const ParticipantEnv::Step step = env.step(t, prev_action, prev_dosage, sed_rng);
        TrajectoryStep ts;
        ts.record.context = step.context;
        if (step.context.available) {
            const Decision d = policy.decide(step.context, action_rng);
            if (d.action != 0 && d.action != 1) throw InvalidArgument("policy returned a non-binary action");
            ts.record.pi = d.pi;
            ts.record.action = d.action;
            ts.pre_clip = d.pre_clip;
            ts.eta = d.eta;
        } else {
            action_rng.discard(1);
        }
        ts.effect_mean = policy.effect_mean(step.context);
        ts.record.reward = step.reward(ts.record.action);
        day_total += ts.record.reward;
        traj.total_reward += ts.record.reward;
        history.push_back(ts.record);
        traj.steps.push_back(ts);
        prev_action = ts.record.action;
        prev_dosage = step.context.dosage;
        if (step.context.slot == cfg.slots_per_day) {
            traj.day_rewards.push_back(day_total);
            day_total = 0.0;
            policy.nightly(history);
        }
    }
    return traj;
}

ReplayPolicy::ReplayPolicy(const Trajectory& log) : steps_(log.steps) {}

Decision ReplayPolicy::decide(const DecisionContext& ctx, std::mt19937_64& rng) {
    rng.discard(1);
    while (next_ < steps_.size() && !steps_[next_].record.context.available) ++next_;
    if (next_ >= steps_.size()) throw InvalidArgument("replay log exhausted");
    const TrajectoryStep& s = steps_[next_++];
    if (s.record.context.day != ctx.day || s.record.context.slot != ctx.slot)
        throw InvalidArgument("replay log is out of step with the environment");
    return {s.pre_clip, s.record.pi, s.record.action, s.eta};
}

void write_trajectory_csv(const Trajectory& traj, int slots_per_day, std::ostream& out) {
    out << "t,day,slot,available,dosage,pre_clip,pi,action,reward,beta_mean_dot_f\n";
    for (const auto& s : traj.steps) {
        const auto& c = s.record.context;
        out << c.time_index(slots_per_day) << ',' << c.day << ',' << c.slot << ','
            << (c.available ? 1 : 0) << ',' << fmt17(c.dosage) << ',' << fmt17(s.pre_clip)
            << ',' << fmt17(s.record.pi) << ',' << s.record.action << ','
            << fmt17(s.record.reward) << ',' << fmt17(s.effect_mean) << '\n';
    }
}

}  // namespace heartsteps
