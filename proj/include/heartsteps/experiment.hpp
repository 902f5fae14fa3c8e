#pragma once

#include "heartsteps/algorithm.hpp"
#include "heartsteps/baselines.hpp"
#include "heartsteps/calibration.hpp"
#include "heartsteps/env.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace heartsteps {

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown
/// after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

inline constexpr std::array<double, 6> kDefaultGammaGrid = {0.0, 0.25, 0.5, 0.75, 0.9, 0.95};
inline constexpr std::array<double, 6> kDefaultWGrid = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
inline constexpr int kDefaultReplications = 96;

/// Sequence-extension seed for the participant at position `index` of a corpus.
std::uint64_t extension_seed(std::uint64_t master, std::size_t index);

/// One environment per participant of `corpus`, all sharing the reward
/// coefficients `truth` and the feature map they were estimated with.
std::vector<ParticipantEnv> build_envs(const Corpus& corpus, const RewardCoefficients& truth,
                                       const FeatureMap& features, const AlgoConfig& cfg,
                                       std::uint64_t seed);

/// Day-1 inputs of the main algorithm from a calibration bundle at (gamma, w).
std::shared_ptr<const AlgorithmInputs> make_inputs(const CalibrationBundle& bundle, double gamma,
                                                   double w);
/// Variant reusing an already solved H1 for this gamma.
std::shared_ptr<const AlgorithmInputs> make_inputs(const CalibrationBundle& bundle, double gamma,
                                                   double w, const FutureValue& h1);

/// Comparator built from the same priors and noise variance.
ThompsonBandit make_bandit(const CalibrationBundle& bundle);

struct TuningResult {
    std::vector<double> gammas;
    std::vector<double> ws;
    std::vector<std::vector<double>> mean_reward;  // [gamma index][w index]
    double best_gamma = 0.0;
    double best_w = 0.0;
    int reps = 0;
    std::size_t n_envs = 0;
};

/// Average total reward of the main algorithm for each (gamma, w), averaging
/// reps per environment and then environments with equal weight. Episode
/// seeds depend only on (environment, rep), so every cell sees the same
/// random numbers. Ties go to the larger gamma, then the larger w.
TuningResult grid_search(const std::vector<ParticipantEnv>& envs, const CalibrationBundle& bundle,
                         const std::vector<double>& gammas, const std::vector<double>& ws, int reps,
                         std::uint64_t seed, int jobs = 1);

struct CvOptions {
    int folds = 3;
    int reps = kDefaultReplications;
    int tuning_reps = kDefaultReplications;
    std::vector<double> gammas{kDefaultGammaGrid.begin(), kDefaultGammaGrid.end()};
    std::vector<double> ws{kDefaultWGrid.begin(), kDefaultWGrid.end()};
    bool null_comparison = false;  // run the comparator on both arms
    bool keep_trajectories = true; // keep rep-0 trajectories for logging
    int jobs = 1;
};

struct ParticipantResult {
    std::string user_id;
    int fold = 0;
    double proposed_mean = 0.0;
    double comparator_mean = 0.0;
    double improvement_mean = 0.0;
    double improvement_se = 0.0;
    Trajectory proposed_log;
    Trajectory comparator_log;
};

struct FoldResult {
    int fold = 0;
    std::vector<std::string> train;
    std::vector<std::string> test;
    TuningResult tuning;
    double sigma2 = 0.0;
};

struct CvReport {
    std::vector<ParticipantResult> participants;  // corpus order
    std::vector<FoldResult> folds;
    double mean_improvement = 0.0;
    double p_value = 1.0;  // one-sided paired t-test, improvement > 0
};

/// k-fold evaluation against the Thompson-sampling bandit: calibrate and
/// tune on the training folds, then simulate the held-out fold with
/// coefficients estimated on that fold.
CvReport cross_validate(const Corpus& corpus, const AlgoConfig& cfg, const CvOptions& opts,
                        std::uint64_t seed);

/// Fold index per participant (corpus order), from a seeded shuffle.
std::vector<int> assign_folds(std::size_t n_participants, int folds, std::uint64_t seed);

/// One-sided p-value of a paired t-test for mean(diffs) > 0.
double paired_t_pvalue(const std::vector<double>& diffs);

}  // namespace heartsteps
