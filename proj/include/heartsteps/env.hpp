#pragma once

#include "heartsteps/core.hpp"
#include "heartsteps/corpus.hpp"
#include "heartsteps/proxy.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace heartsteps {

/// Fixed per-timestep inputs of the generative model.
struct TimestepData {
    RawContext raw;
    bool available = false;
    double residual = 0.0;
};

using ParticipantSequence = std::vector<TimestepData>;

/// Appends whole days drawn uniformly (with replacement) from the first
/// `base_days` days until the sequence covers `target_days`.
ParticipantSequence extend_sequence(const ParticipantSequence& base, int slots_per_day,
                                    int target_days, std::mt19937_64& rng);

/// Simulated participant: context/availability/residual sequence plus the
/// reward coefficients used to generate rewards.
class ParticipantEnv {
public:
    ParticipantEnv(std::string user_id, ParticipantSequence sequence, RewardCoefficients truth,
                   FeatureMap features, double lambda, double p_sed, int slots_per_day);

    const std::string& user_id() const { return user_id_; }
    std::size_t horizon() const { return sequence_.size(); }
    int slots_per_day() const { return slots_per_day_; }
    const ParticipantSequence& sequence() const { return sequence_; }
    const RewardCoefficients& truth() const { return truth_; }
    const FeatureMap& features() const { return features_; }

    /// The decision context at 1-based time t, plus the reward it generates.
    struct Step {
        DecisionContext context;
        bool anti_sedentary = false;  // B_t
        std::size_t t = 0;
        const ParticipantEnv* env = nullptr;

        double reward(int action) const { return env->reward(t, context, action); }
    };

    /// Draws B_t ~ Bernoulli(p_sed) from one uniform of `sed_rng`, sets the
    /// dosage lambda * prev_dosage + 1{prev_action = 1 or B_t = 1} (X_1 = 0),
    /// and attaches the fixed context and availability.
    Step step(std::size_t t, int prev_action, double prev_dosage, std::mt19937_64& sed_rng) const;

    /// Available: g' alpha_avail + a f' beta + eps_t. Unavailable: g' alpha_unavail + eps_t.
    double reward(std::size_t t, const DecisionContext& ctx, int action) const;

private:
    std::string user_id_;
    ParticipantSequence sequence_;
    RewardCoefficients truth_;
    FeatureMap features_;
    double lambda_;
    double p_sed_;
    int slots_per_day_;
};

/// Builds the 90-day environment of one participant from their corpus rows.
/// The extension is sampled once from `extension_seed`.
ParticipantEnv make_env(std::span<const CorpusRow> rows, const RewardCoefficients& truth,
                        const FeatureMap& features, const AlgoConfig& cfg,
                        std::uint64_t extension_seed);

/// What a policy decided at an available time.
struct Decision {
    double pre_clip = 0.0;
    double pi = 0.0;
    int action = 0;
    double eta = 0.0;
};

/// Online decision rule with a nightly update hook.
class Policy {
public:
    virtual ~Policy() = default;
    /// Restores the day-1 state.
    virtual void reset() = 0;
    /// Called only at available times.
    virtual Decision decide(const DecisionContext& ctx, std::mt19937_64& rng) = 0;
    /// Called after the last slot of each day with the full history so far.
    virtual void nightly(std::span<const HistoryRecord> history) = 0;
    /// Posterior mean treatment effect f' mu at ctx, for logging.
    virtual double effect_mean(const DecisionContext& ctx) const = 0;
};

struct TrajectoryStep {
    HistoryRecord record;
    double pre_clip = 0.0;  // 0 at unavailable times
    double eta = 0.0;
    double effect_mean = 0.0;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    std::vector<double> day_rewards;
    double total_reward = 0.0;

    HistoryLog records() const;
};

/// Runs one simulated study. Two engines are seeded from `seed`: one for the
/// B_t draws and one for action draws; each advances exactly once per
/// timestep, so the draw at time t does not depend on earlier decisions.
Trajectory run_episode(const ParticipantEnv& env, Policy& policy, const AlgoConfig& cfg,
                       std::uint64_t seed);

/// Plays back recorded actions; used to check replay determinism.
class ReplayPolicy : public Policy {
public:
    explicit ReplayPolicy(const Trajectory& log);
    void reset() override { next_ = 0; }
    Decision decide(const DecisionContext& ctx, std::mt19937_64& rng) override;
    void nightly(std::span<const HistoryRecord>) override {}
    double effect_mean(const DecisionContext&) const override { return 0.0; }

private:
    std::vector<TrajectoryStep> steps_;
    std::size_t next_ = 0;
};

/// Trajectory log in CSV form.
void write_trajectory_csv(const Trajectory& traj, int slots_per_day, std::ostream& out);

}  // namespace heartsteps
