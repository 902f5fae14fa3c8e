#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace heartsteps {

/// Tuning knobs and fixed constants of the online algorithm.
struct AlgoConfig {
    double lambda = 0.95;    // dosage decay
    double epsilon0 = 0.2;   // pi <= 1 - epsilon0
    double epsilon1 = 0.1;   // pi >= epsilon1
    double gamma = 0.9;      // proxy-MDP discount
    double w = 0.5;          // weight of the learned future value against H1
    double sigma2 = 1.0;     // reward noise variance, frozen after calibration
    double p_sed = 0.2;      // anti-sedentary suggestion probability
    int slots_per_day = 5;
    int n_days = 90;
    int dosage_grid_size = 201;

    /// Throws InvalidArgument on any out-of-range field.
    void validate() const;

    /// Supremum of the dosage recursion, 1/(1 - lambda).
    double dosage_cap() const { return 1.0 / (1.0 - lambda); }
    int horizon() const { return slots_per_day * n_days; }
};

/// Raw (unstandardized) context variables observed at a decision time.
enum class RawFeature : std::size_t {
    Prior30Steps = 0,
    YesterdaySteps,
    Temperature,
    Location,       // 1 = home/work, 0 = elsewhere
    StepVariation,
    Engagement,
};

inline constexpr std::size_t kNumRawFeatures = 6;
inline constexpr std::array<std::string_view, kNumRawFeatures> kRawFeatureNames = {
    "prior30_steps", "yesterday_steps", "temperature",
    "location",      "step_variation",  "engagement",
};

struct RawContext {
    std::array<double, kNumRawFeatures> values{};

    double operator[](RawFeature f) const { return values[static_cast<std::size_t>(f)]; }
    double& operator[](RawFeature f) { return values[static_cast<std::size_t>(f)]; }

    /// Throws InvalidArgument naming the first missing feature.
    static RawContext from_named(const std::map<std::string, double>& named);
};

/// Observation at one decision time.
struct DecisionContext {
    int day = 1;   // 1-based
    int slot = 1;  // 1-based, within 1..slots_per_day
    bool available = false;
    RawContext raw;
    double dosage = 0.0;

    /// Linear time index t = slots_per_day * (day - 1) + slot.
    int time_index(int slots_per_day) const { return slots_per_day * (day - 1) + slot; }
};

// Feature layout. Both vectors carry a leading intercept.
namespace fidx {
inline constexpr int kIntercept = 0;
inline constexpr int kDosage = 1;
inline constexpr int kEngagement = 2;
inline constexpr int kLocation = 3;
inline constexpr int kStepVariation = 4;
inline constexpr int kPrior30 = 5;     // g only
inline constexpr int kYesterday = 6;   // g only
inline constexpr int kTemperature = 7; // g only
}  // namespace fidx

inline constexpr int kDimF = 5;
inline constexpr int kDimG = 8;
inline constexpr std::array<std::string_view, kDimF> kFNames = {
    "intercept", "dosage", "engagement", "location", "step_variation"};
inline constexpr std::array<std::string_view, kDimG> kGNames = {
    "intercept",      "dosage",        "engagement",      "location",
    "step_variation", "prior30_steps", "yesterday_steps", "temperature"};

/// Treatment-effect features f and baseline features g.
struct FeaturePair {
    Eigen::VectorXd f;
    Eigen::VectorXd g;
};

/// Min/max table mapping raw context values onto [0, 1].
class Standardizer {
public:
    struct Range {
        double min = 0.0;
        double max = 1.0;
    };

    Standardizer() = default;
    explicit Standardizer(const std::array<Range, kNumRawFeatures>& ranges);

    /// Ranges taken from the observed minima and maxima.
    static Standardizer fit(std::span<const RawContext> sample);
    /// Throws InvalidArgument naming the first feature absent from the map.
    static Standardizer from_named(const std::map<std::string, Range>& named);

    /// (v - min) / (max - min), clamped to [0, 1].
    double apply(RawFeature feature, double value) const;
    const Range& range(RawFeature feature) const {
        return ranges_[static_cast<std::size_t>(feature)];
    }
    std::map<std::string, Range> to_named() const;

    bool operator==(const Standardizer&) const = default;

private:
    std::array<Range, kNumRawFeatures> ranges_{};
};

inline bool operator==(const Standardizer::Range& a, const Standardizer::Range& b) {
    return a.min == b.min && a.max == b.max;
}

/// Builds f and g from a raw context and dosage.
FeaturePair build_features(const RawContext& raw, double dosage, const Standardizer& scaler,
                           double lambda);

/// Feature construction bound to a frozen scaler and dosage decay.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(Standardizer scaler, double lambda);

    FeaturePair operator()(const RawContext& raw, double dosage) const {
        return build_features(raw, dosage, scaler_, lambda_);
    }
    const Standardizer& scaler() const { return scaler_; }
    double lambda() const { return lambda_; }

private:
    Standardizer scaler_;
    double lambda_ = 0.95;
};

/// X' = lambda * X + 1{event}. Rejects prev outside [0, 1/(1 - lambda)).
double update_dosage(double prev, bool event, double lambda);

/// min(1 - epsilon0, max(p, epsilon1)).
double clip_probability(double p, double epsilon0, double epsilon1);

/// Mean vector and covariance of a multivariate normal.
struct GaussianBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    Eigen::Index dim() const { return mean.size(); }
    /// Symmetric within 1e-10 and no eigenvalue below -1e-10.
    void check_valid() const;
};

/// One row of a participant's history.
struct HistoryRecord {
    DecisionContext context;
    double pi = 0.0;  // probability used at selection time; 0 when unavailable
    int action = 0;
    double reward = 0.0;
};

using HistoryLog = std::vector<HistoryRecord>;

}  // namespace heartsteps
