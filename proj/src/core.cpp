#include "heartsteps/core.hpp"

#include "heartsteps/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace heartsteps {

namespace {

bool in_open_unit(double v) { return v > 0.0 && v < 1.0; }
bool in_closed_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void AlgoConfig::validate() const {
    if (!in_open_unit(lambda)) throw InvalidArgument("lambda must lie in (0, 1)");
    if (!in_open_unit(epsilon0)) throw InvalidArgument("epsilon0 must lie in (0, 1)");
    if (!in_open_unit(epsilon1)) throw InvalidArgument("epsilon1 must lie in (0, 1)");
    if (!(epsilon1 < 1.0 - epsilon0))
        throw InvalidArgument("clip interval is empty: need epsilon1 < 1 - epsilon0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
    if (!in_closed_unit(w)) throw InvalidArgument("w must lie in [0, 1]");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
        throw InvalidArgument("sigma2 must be positive and finite");
    if (!in_closed_unit(p_sed)) throw InvalidArgument("p_sed must lie in [0, 1]");
    if (slots_per_day <= 0) throw InvalidArgument("slots_per_day must be positive");
    if (n_days <= 0) throw InvalidArgument("n_days must be positive");
    if (dosage_grid_size < 2) throw InvalidArgument("dosage_grid_size must be at least 2");
}

RawContext RawContext::from_named(const std::map<std::string, double>& named) {
    RawContext out;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        auto it = named.find(std::string(kRawFeatureNames[i]));
        if (it == named.end())
            throw InvalidArgument("missing context feature '" + std::string(kRawFeatureNames[i]) +
                                  "'");
        out.values[i] = it->second;
    }
    return out;
}

Standardizer::Standardizer(const std::array<Range, kNumRawFeatures>& ranges) : ranges_(ranges) {
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        if (!(ranges_[i].max > ranges_[i].min))
            throw InvalidArgument("scaler range for '" + std::string(kRawFeatureNames[i]) +
                                  "' must satisfy max > min");
    }
}

Standardizer Standardizer::fit(std::span<const RawContext> sample) {
    if (sample.empty()) throw InvalidArgument("cannot fit a scaler to an empty sample");
    std::array<Range, kNumRawFeatures> ranges;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        ranges[i].min = std::numeric_limits<double>::infinity();
        ranges[i].max = -std::numeric_limits<double>::infinity();
    }
    for (const auto& ctx : sample) {
        for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
            ranges[i].min = std::min(ranges[i].min, ctx.values[i]);
            ranges[i].max = std::max(ranges[i].max, ctx.values[i]);
        }
    }
    return Standardizer(ranges);
}

Standardizer Standardizer::from_named(const std::map<std::string, Range>& named) {
    std::array<Range, kNumRawFeatures> ranges;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        auto it = named.find(std::string(kRawFeatureNames[i]));
        if (it == named.end())
            throw InvalidArgument("scaler is missing feature '" +
                                  std::string(kRawFeatureNames[i]) + "'");
        ranges[i] = it->second;
    }
    return Standardizer(ranges);
}

double Standardizer::apply(RawFeature feature, double value) const {
    const Range& r = range(feature);
    return std::clamp((value - r.min) / (r.max - r.min), 0.0, 1.0);
}

std::map<std::string, Standardizer::Range> Standardizer::to_named() const {
    std::map<std::string, Range> out;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i)
        out.emplace(std::string(kRawFeatureNames[i]), ranges_[i]);
    return out;
}

FeaturePair build_features(const RawContext& raw, double dosage, const Standardizer& scaler,
                           double lambda) {
    const double cap = 1.0 / (1.0 - lambda);
    if (!(dosage >= 0.0 && dosage <= cap))
        throw InvalidArgument("dosage " + std::to_string(dosage) + " outside [0, " +
                              std::to_string(cap) + "]");
    const double dose = dosage / cap;
    const double engagement = scaler.apply(RawFeature::Engagement, raw[RawFeature::Engagement]);
    const double location = scaler.apply(RawFeature::Location, raw[RawFeature::Location]);
    const double variation =
        scaler.apply(RawFeature::StepVariation, raw[RawFeature::StepVariation]);

    FeaturePair out;
    out.f.resize(kDimF);
    out.f << 1.0, dose, engagement, location, variation;
    out.g.resize(kDimG);
    out.g << 1.0, dose, engagement, location, variation,
        scaler.apply(RawFeature::Prior30Steps, raw[RawFeature::Prior30Steps]),
        scaler.apply(RawFeature::YesterdaySteps, raw[RawFeature::YesterdaySteps]),
        scaler.apply(RawFeature::Temperature, raw[RawFeature::Temperature]);
    return out;
}

FeatureMap::FeatureMap(Standardizer scaler, double lambda)
    : scaler_(std::move(scaler)), lambda_(lambda) {
    if (!in_open_unit(lambda)) throw InvalidArgument("lambda must lie in (0, 1)");
}

double update_dosage(double prev, bool event, double lambda) {
    const double cap = 1.0 / (1.0 - lambda);
    if (!(prev >= 0.0 && prev < cap))
        throw InvalidArgument("previous dosage " + std::to_string(prev) + " outside [0, " +
                              std::to_string(cap) + ")");
    return lambda * prev + (event ? 1.0 : 0.0);
}

double clip_probability(double p, double epsilon0, double epsilon1) {
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidArgument("probability " + std::to_string(p) + " outside [0, 1]");
    return std::min(1.0 - epsilon0, std::max(p, epsilon1));
}

void GaussianBelief::check_valid() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw InvalidArgument("belief covariance does not match mean dimension");
    if (!mean.allFinite() || !cov.allFinite())
        throw NumericalError("belief contains non-finite entries");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw NumericalError("belief covariance is not symmetric");
    if (cov.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10)
        throw NumericalError("belief covariance is not positive semidefinite");
}

}  // namespace heartsteps
