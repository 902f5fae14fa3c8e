#include "support.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/serialization.hpp"

#include <doctest.h>

#include <sstream>

using namespace heartsteps;
using namespace testing;

TEST_CASE("config round trip and validation") {
    AlgoConfig cfg;
    cfg.gamma = 0.75;
    cfg.w = 0.25;
    cfg.sigma2 = 1.7;
    const Json j = config_to_json(cfg);
    const AlgoConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.gamma == 0.75);

    CHECK(config_from_json(Json::parse(R"({"gamma": 0.5})")).gamma == 0.5);
    CHECK(config_from_json(Json::parse(R"({"gamma": 0.5})")).lambda == 0.95);
    CHECK_THROWS_AS(config_from_json(Json::parse(R"({"gama": 0.5})")), ParseError);
    CHECK_THROWS_AS(config_from_json(Json::parse(R"({"gamma": 1.5})")), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(Json::parse(R"({"gamma": "high"})")), ParseError);
    CHECK_NOTHROW(config_from_json(Json::parse(R"({"corpus": {"participants": 4}})")));
}

TEST_CASE("corpus spec and standardizer round trips") {
    CorpusSpec spec;
    spec.participants = 5;
    spec.beta[1] = -2.0;
    const CorpusSpec back = corpus_spec_from_json(corpus_spec_to_json(spec));
    CHECK(back.participants == 5);
    CHECK(back.beta == spec.beta);
    CHECK(corpus_spec_to_json(back) == corpus_spec_to_json(spec));

    const Standardizer s = nominal_scaler();
    CHECK(standardizer_from_json(standardizer_to_json(s)) == s);
    Json broken = standardizer_to_json(s);
    broken.erase("temperature");
    CHECK_THROWS_AS(standardizer_from_json(broken), ParseError);
}

TEST_CASE("bundle round trip is exact") {
    BundleDocument doc{shared_bundle(), std::nullopt};
    const Json j = bundle_to_json(doc);
    CHECK(j.at("format") == "heartsteps-calibration");
    CHECK(j.at("format_version") == kBundleFormatVersion);
    const BundleDocument back = bundle_from_json(j);
    CHECK(bundle_to_json(back) == j);
    CHECK(back.bundle.sigma2 == doc.bundle.sigma2);
    CHECK(back.bundle.prior_beta.mean == doc.bundle.prior_beta.mean);
    CHECK(back.bundle.prior_beta.cov == doc.bundle.prior_beta.cov);
    CHECK(back.bundle.population.beta == doc.bundle.population.beta);
    CHECK(max_abs_diff(back.bundle.h1.H, doc.bundle.h1.H) == 0.0);
    CHECK(!back.tuning);

    // Text round trip through dump/parse keeps every double.
    const Json reparsed = Json::parse(j.dump(2));
    CHECK(bundle_to_json(bundle_from_json(reparsed)) == j);

    Json wrong = j;
    wrong["format_version"] = 99;
    CHECK_THROWS(bundle_from_json(wrong));
}

TEST_CASE("tuning round trip") {
    TuningResult t;
    t.gammas = {0.0, 0.5};
    t.ws = {0.0, 0.25, 1.0};
    t.mean_reward = {{1.0, 2.0, 3.0}, {4.0, 5.5, 6.125}};
    t.best_gamma = 0.5;
    t.best_w = 1.0;
    t.reps = 3;
    t.n_envs = 7;
    const TuningResult back = tuning_from_json(tuning_to_json(t));
    CHECK(back.gammas == t.gammas);
    CHECK(back.ws == t.ws);
    CHECK(back.mean_reward == t.mean_reward);
    CHECK(back.best_gamma == 0.5);
    CHECK(back.reps == 3);
    CHECK(back.n_envs == 7);

    BundleDocument doc{shared_bundle(), t};
    const BundleDocument withtuning = bundle_from_json(bundle_to_json(doc));
    REQUIRE(withtuning.tuning);
    CHECK(withtuning.tuning->mean_reward == t.mean_reward);
}

TEST_CASE("future value round trip") {
    const FutureValue& fv = shared_bundle().h1;
    const FutureValue back = future_value_from_json(future_value_to_json(fv, 0.9));
    CHECK(back.grid == fv.grid);
    CHECK(max_abs_diff(back.V, fv.V) == 0.0);
    CHECK(back.p_avail == fv.p_avail);
}

TEST_CASE("number formatting keeps 17 significant digits") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1.0) == "1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("cv report csv") {
    CvReport r;
    ParticipantResult p;
    p.user_id = "u1";
    p.fold = 2;
    p.proposed_mean = 10.5;
    p.comparator_mean = 10.0;
    p.improvement_mean = 0.5;
    p.improvement_se = 0.25;
    r.participants.push_back(p);
    std::ostringstream out;
    write_cv_csv(r, out);
    CHECK(out.str() ==
          "user_id,fold,proposed_mean,comparator_mean,improvement_mean,improvement_se\n"
          "u1,2,10.5,10,0.5,0.25\n");
}
