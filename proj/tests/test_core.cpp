#include "support.hpp"

#include "heartsteps/error.hpp"

#include <doctest.h>

using namespace heartsteps;
using namespace testing;

TEST_CASE("update_dosage examples") {
    CHECK(update_dosage(0.0, true, 0.95) == 1.0);
    CHECK(update_dosage(1.0, false, 0.95) == doctest::Approx(0.95).epsilon(1e-15));
    const double near_cap = 20.0 - 1e-9;
    const double next = update_dosage(near_cap, true, 0.95);
    CHECK(next < 20.0);
    CHECK(next == doctest::Approx(20.0).epsilon(1e-9));
    CHECK_THROWS_AS(update_dosage(-1e-12, false, 0.95), InvalidArgument);
    CHECK_THROWS_AS(update_dosage(20.0, false, 0.95), InvalidArgument);
}

TEST_CASE("dosage recursion supremum stays below 1/(1-lambda)") {
    double x = 0.0, max_seen = 0.0;
    for (int i = 0; i < 10000; ++i) {
        x = update_dosage(x, true, 0.95);
        max_seen = std::max(max_seen, x);
    }
    CHECK(max_seen < 20.0);
    CHECK(max_seen > 19.999);
}

TEST_CASE("dosage stays in range over random event sequences") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.7);
    for (int seq = 0; seq < 2000; ++seq) {
        double x = 0.0;
        for (int t = 0; t < 450; ++t) {
            x = update_dosage(x, coin(rng), 0.95);
            REQUIRE(x >= 0.0);
            REQUIRE(x < 1.0 / (1.0 - 0.95));
        }
    }
}

TEST_CASE("clip_probability examples and properties") {
    CHECK(clip_probability(0.5, 0.2, 0.1) == 0.5);
    CHECK(clip_probability(0.95, 0.2, 0.1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(clip_probability(0.02, 0.2, 0.1) == 0.1);
    CHECK_THROWS_AS(clip_probability(1.5, 0.2, 0.1), InvalidArgument);
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        const double p = i / 1000.0;
        const double c = clip_probability(p, 0.2, 0.1);
        CHECK(clip_probability(c, 0.2, 0.1) == c);
        CHECK(c >= prev);
        CHECK(c >= 0.1);
        CHECK(c <= 0.8);
        prev = c;
    }
}

TEST_CASE("AlgoConfig defaults and validation") {
    AlgoConfig cfg;
    CHECK(cfg.lambda == 0.95);
    CHECK(cfg.epsilon0 == 0.2);
    CHECK(cfg.epsilon1 == 0.1);
    CHECK(cfg.p_sed == 0.2);
    CHECK(cfg.slots_per_day == 5);
    CHECK(cfg.n_days == 90);
    CHECK(cfg.horizon() == 450);
    CHECK_NOTHROW(cfg.validate());
    AlgoConfig bad = cfg;
    bad.epsilon0 = 0.6;
    bad.epsilon1 = 0.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.w = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("build_features examples") {
    const Standardizer s = nominal_scaler();
    RawContext lo;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i)
        lo.values[i] = s.range(static_cast<RawFeature>(i)).min;
    const FeaturePair at_min = build_features(lo, 0.0, s, 0.95);
    CHECK(at_min.f.size() == kDimF);
    CHECK(at_min.g.size() == kDimG);
    CHECK(at_min.f[0] == 1.0);
    CHECK(at_min.f.tail(4).isZero());
    CHECK(at_min.g.tail(7).isZero());

    const FeaturePair dosed = build_features(lo, 10.0, s, 0.95);
    CHECK(dosed.f[fidx::kDosage] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(dosed.g[fidx::kDosage] == dosed.f[fidx::kDosage]);

    // Above-range values clamp to 1, checked against a direct formula.
    RawContext hi = lo;
    const auto& r = s.range(RawFeature::Temperature);
    hi[RawFeature::Temperature] = r.max + 1.0;
    CHECK(build_features(hi, 0.0, s, 0.95).g[fidx::kTemperature] == 1.0);
    hi[RawFeature::Temperature] = r.min + 0.25 * (r.max - r.min);
    CHECK(build_features(hi, 0.0, s, 0.95).g[fidx::kTemperature] ==
          doctest::Approx(0.25).epsilon(1e-14));

    CHECK_THROWS_AS(build_features(lo, -0.1, s, 0.95), InvalidArgument);
    CHECK_THROWS_AS(build_features(lo, 20.5, s, 0.95), InvalidArgument);
}

TEST_CASE("features: layout shared between f and g, entries in [0, 1]") {
    std::mt19937_64 rng(2);
    const Standardizer s = nominal_scaler();
    std::uniform_real_distribution<double> dose(0.0, 19.99);
    for (int i = 0; i < 500; ++i) {
        RawContext raw = random_raw(rng, s);
        raw[RawFeature::Temperature] += 30.0;  // pushes some values out of range
        const FeaturePair p = build_features(raw, dose(rng), s, 0.95);
        CHECK(p.f == p.g.head(kDimF));
        CHECK(p.f[0] == 1.0);
        CHECK(p.g.tail(kDimG - 1).minCoeff() >= 0.0);
        CHECK(p.g.tail(kDimG - 1).maxCoeff() <= 1.0);
    }
}

TEST_CASE("standardized features are invariant to affine re-encoding") {
    std::mt19937_64 rng(3);
    std::vector<RawContext> sample(200), recoded(200);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        sample[i] = random_raw(rng);
        recoded[i] = sample[i];
        for (auto& v : recoded[i].values) v = -3.0 + 2.5 * v;
    }
    const Standardizer a = Standardizer::fit(sample);
    const Standardizer b = Standardizer::fit(recoded);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const FeaturePair pa = build_features(sample[i], 3.0, a, 0.95);
        const FeaturePair pb = build_features(recoded[i], 3.0, b, 0.95);
        CHECK((pa.g - pb.g).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("named construction reports the missing feature") {
    std::map<std::string, double> named;
    for (auto n : kRawFeatureNames) named[std::string(n)] = 0.5;
    CHECK_NOTHROW(RawContext::from_named(named));
    named.erase("temperature");
    try {
        RawContext::from_named(named);
        FAIL("expected an error");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("temperature") != std::string::npos);
    }

    auto ranges = nominal_scaler().to_named();
    CHECK(Standardizer::from_named(ranges) == nominal_scaler());
    ranges.erase("step_variation");
    try {
        Standardizer::from_named(ranges);
        FAIL("expected an error");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("step_variation") != std::string::npos);
    }
}

TEST_CASE("GaussianBelief validity checks") {
    GaussianBelief b = diag_belief(3, 0.0, 1.0);
    CHECK_NOTHROW(b.check_valid());
    b.cov(0, 1) = 1e-6;
    CHECK_THROWS_AS(b.check_valid(), NumericalError);
    b.cov(0, 1) = 0.0;
    b.cov(2, 2) = -1e-3;
    CHECK_THROWS_AS(b.check_valid(), NumericalError);
}
