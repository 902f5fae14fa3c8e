#pragma once

#include "heartsteps/core.hpp"
#include "heartsteps/corpus.hpp"
#include "heartsteps/posterior.hpp"
#include "heartsteps/proxy.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace heartsteps {

/// Pooled least squares with a participant-clustered sandwich variance
/// (GEE under an independence working correlation).
struct PooledFit {
    std::vector<std::string> columns;
    Eigen::VectorXd coef;
    Eigen::VectorXd robust_se;
    Eigen::VectorXd p_values;  // two-sided, normal approximation
    double residual_variance = 0.0;
    std::size_t n_obs = 0;
    std::size_t n_clusters = 0;
};

/// Regression inputs with a cluster label per row.
struct RegressionData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<int> cluster;              // index into cluster_ids
    std::vector<std::string> cluster_ids;
    std::vector<std::string> columns;
};

/// Throws RankDeficient naming the collinear columns.
PooledFit pooled_fit(const RegressionData& data);

/// Which of the two historical reward regressions to build.
enum class RewardModel {
    Available,    // R = g' alpha + A f' beta on available rows
    Unavailable,  // R = g' alpha on unavailable rows
};

/// Design matrix for one reward model. Column names carry a "g:" or "f:"
/// prefix. Features listed in `uncollected` are left out of the design.
RegressionData build_design(const Corpus& corpus, RewardModel model, const FeatureMap& features,
                            std::span<const std::string> uncollected);

struct PersonFits {
    std::vector<std::string> users;
    std::vector<Eigen::VectorXd> coefs;
    std::vector<std::string> skipped;  // participants whose design was rank deficient
};

/// Separate least-squares fit per cluster of `data`.
PersonFits person_fits(const RegressionData& data);

/// Prior mean and standard deviation per fitted column.
struct PriorTable {
    std::vector<std::string> columns;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
};

/// Significant columns (p < alpha_level): pooled estimate and across-person
/// sd. Others: mean 0 and half the across-person sd.
PriorTable build_prior(const PooledFit& pooled, const PersonFits& persons,
                       double alpha_level = 0.05);

/// Diagonal prior over one feature block ("g" or "f") in the full layout.
/// Features missing from the table get mean 0 and the average sd of the
/// block's other entries.
GaussianBelief block_prior(const PriorTable& table, std::string_view block);

/// Full-layout coefficient vector for one block; missing features are 0.
Eigen::VectorXd block_coefficients(const PooledFit& fit, std::string_view block);

struct CalibrationOptions {
    double alpha_level = 0.05;
    std::vector<std::string> uncollected = {"engagement"};
};

/// Everything the training phase derives from a historical corpus.
struct CalibrationBundle {
    AlgoConfig cfg;                 // sigma2 overwritten with the calibrated value
    Standardizer scaler;
    GaussianBelief prior_alpha0;    // g block, available times
    GaussianBelief prior_beta;      // f block
    GaussianBelief prior_unavail;   // g block, unavailable times
    double sigma2 = 0.0;
    double p_avail = 0.0;
    ContextMoments context_moments;
    RewardCoefficients population;  // pooled estimates in the full layout
    PooledFit fit_available;
    PooledFit fit_unavailable;
    std::vector<std::string> skipped_participants;
    std::size_t n_participants = 0;
    std::size_t n_rows = 0;
    FutureValue h1;                 // initial future value at cfg.gamma

    FeatureMap features() const { return FeatureMap(scaler, cfg.lambda); }
    JointPrior joint_prior() const { return JointPrior::from_blocks(prior_alpha0, prior_beta); }
};

CalibrationBundle calibrate(const Corpus& corpus, const AlgoConfig& cfg,
                            const CalibrationOptions& opts = {});

/// Initial future value from historical data: context distribution,
/// availability rate, and pooled reward estimates, solved at `gamma`.
FutureValue initial_H(const CalibrationBundle& bundle, double gamma);

/// Same, straight from a corpus and coefficient estimates.
FutureValue initial_H(const Corpus& corpus, const RewardCoefficients& coef,
                      const FeatureMap& features, const AlgoConfig& cfg);

}  // namespace heartsteps
