#include "support.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/experiment.hpp"

#include <doctest.h>

#include <atomic>
#include <set>

using namespace heartsteps;
using namespace testing;

TEST_CASE("parallel_for visits every index once and propagates errors") {
    for (int jobs : {1, 3}) {
        std::vector<std::atomic<int>> hits(50);
        parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) CHECK(h.load() == 1);
    }
    CHECK_THROWS_AS(parallel_for(10, 2,
                                 [](std::size_t i) {
                                     if (i == 7) throw NumericalError("boom");
                                 }),
                    NumericalError);
}

TEST_CASE("fold assignment partitions participants evenly") {
    const auto folds = assign_folds(37, 3, 5);
    std::array<int, 3> sizes{};
    for (int f : folds) {
        REQUIRE(f >= 0);
        REQUIRE(f < 3);
        ++sizes[static_cast<std::size_t>(f)];
    }
    CHECK(sizes[0] == 13);
    CHECK(sizes[1] == 12);
    CHECK(sizes[2] == 12);
    CHECK(assign_folds(37, 3, 5) == folds);
    CHECK(assign_folds(37, 3, 6) != folds);
    CHECK_THROWS_AS(assign_folds(2, 3, 1), InvalidArgument);
}

TEST_CASE("paired t-test p-value") {
    // t = 2 sqrt(3) on 2 degrees of freedom: P(T > t) = (1 - t / sqrt(t^2 + 2)) / 2.
    const double t = 2.0 * std::sqrt(3.0);
    CHECK(paired_t_pvalue({1.0, 2.0, 3.0}) ==
          doctest::Approx(0.5 * (1.0 - t / std::sqrt(t * t + 2.0))).epsilon(1e-12));
    CHECK(paired_t_pvalue({-1.0, -2.0, -3.0}) > 0.95);
    CHECK(paired_t_pvalue({0.0, 0.0, 0.0}) == 1.0);
    CHECK_THROWS_AS(paired_t_pvalue({1.0}), InvalidArgument);
}

TEST_CASE("grid search: table shape, common random numbers, determinism") {
    const CalibrationBundle& b = shared_bundle();
    const Corpus corpus = small_corpus(1);
    const auto envs = build_envs(corpus.subset(std::vector<std::string>{corpus.participants()[0],
                                                                        corpus.participants()[1]}),
                                 b.population, b.features(), b.cfg, 4);
    REQUIRE(envs.size() == 2);
    const std::vector<double> gammas{0.0, 0.5, 0.9}, ws{0.0, 1.0};
    const TuningResult r = grid_search(envs, b, gammas, ws, 2, 99, 1);
    REQUIRE(r.mean_reward.size() == 3);
    for (const auto& row : r.mean_reward) CHECK(row.size() == 2);
    CHECK(std::find(gammas.begin(), gammas.end(), r.best_gamma) != gammas.end());
    CHECK(std::find(ws.begin(), ws.end(), r.best_w) != ws.end());
    double best = -1e300;
    for (const auto& row : r.mean_reward)
        for (double v : row) best = std::max(best, v);
    const auto gi = static_cast<std::size_t>(std::find(gammas.begin(), gammas.end(), r.best_gamma) - gammas.begin());
    const auto wi = static_cast<std::size_t>(std::find(ws.begin(), ws.end(), r.best_w) - ws.begin());
    CHECK(r.mean_reward[gi][wi] == best);

    // With gamma = 0 eta vanishes, so w cannot matter under shared seeds.
    CHECK(r.mean_reward[0][0] == r.mean_reward[0][1]);

    const TuningResult again = grid_search(envs, b, gammas, ws, 2, 99, 2);
    CHECK(again.mean_reward == r.mean_reward);
    CHECK(again.best_gamma == r.best_gamma);

    const TuningResult single = grid_search(envs, b, {0.5}, {0.5}, 2, 99, 1);
    CHECK(single.best_gamma == 0.5);
    CHECK(single.best_w == 0.5);
    CHECK_THROWS_AS(grid_search(envs, b, {}, {0.5}, 2, 99, 1), InvalidArgument);
}

TEST_CASE("cross validation: structure and the null comparison") {
    const Corpus corpus = small_corpus(7, 6, 42);
    CvOptions opts;
    opts.folds = 3;
    opts.reps = 2;
    opts.tuning_reps = 1;
    opts.gammas = {0.0, 0.9};
    opts.ws = {0.5};
    opts.null_comparison = true;
    const CvReport null = cross_validate(corpus, AlgoConfig{}, opts, 21);
    REQUIRE(null.participants.size() == 6);
    REQUIRE(null.folds.size() == 3);
    std::set<std::string> tested;
    for (const auto& f : null.folds) {
        CHECK(f.train.size() + f.test.size() == 6);
        for (const auto& u : f.test) CHECK(tested.insert(u).second);
        CHECK(f.tuning.mean_reward.size() == 2);
    }
    CHECK(tested.size() == 6);
    for (const auto& p : null.participants) CHECK(p.improvement_mean == 0.0);
    CHECK(null.mean_improvement == 0.0);

    opts.null_comparison = false;
    const CvReport real = cross_validate(corpus, AlgoConfig{}, opts, 21);
    const CvReport repeat = cross_validate(corpus, AlgoConfig{}, opts, 21);
    for (std::size_t i = 0; i < real.participants.size(); ++i) {
        const auto& p = real.participants[i];
        CHECK(p.user_id == corpus.participants()[i]);
        CHECK(p.improvement_mean == doctest::Approx(p.proposed_mean - p.comparator_mean));
        CHECK(p.proposed_log.steps.size() == 450);
        CHECK(p.proposed_mean == repeat.participants[i].proposed_mean);
        // The comparator arm does not depend on the tuned (gamma, w).
        CHECK(p.comparator_mean == null.participants[i].comparator_mean);
    }
    CHECK(real.p_value == repeat.p_value);
}
