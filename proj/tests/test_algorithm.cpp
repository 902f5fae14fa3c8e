#include "support.hpp"

#include "heartsteps/algorithm.hpp"
#include "heartsteps/experiment.hpp"
#include "heartsteps/selector.hpp"

#include <doctest.h>

using namespace heartsteps;
using namespace testing;

namespace {

ParticipantEnv env_for(std::size_t index) {
    const CalibrationBundle& b = shared_bundle();
    const Corpus corpus = small_corpus(1);
    return make_env(corpus.participant_rows(index), b.population, b.features(), b.cfg,
                    extension_seed(3, index));
}

}  // namespace

TEST_CASE("every recorded probability at an available time is clipped") {
    const CalibrationBundle& b = shared_bundle();
    const ParticipantEnv env = env_for(0);
    auto inputs = make_inputs(b, 0.9, 0.5);
    HeartStepsAlgorithm algo(inputs);
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
        const Trajectory t = run_episode(env, algo, inputs->cfg, rep);
        for (const auto& s : t.steps) {
            if (!s.record.context.available) continue;
            CHECK(s.record.pi >= 0.1);
            CHECK(s.record.pi <= 0.8);
        }
    }
}

TEST_CASE("nightly posterior equals the batch posterior over the history") {
    const CalibrationBundle& b = shared_bundle();
    const ParticipantEnv env = env_for(1);
    auto inputs = make_inputs(b, 0.5, 0.5);
    HeartStepsAlgorithm algo(inputs);
    const Trajectory t = run_episode(env, algo, inputs->cfg, 3);
    const HistoryLog log = t.records();
    const GaussianBelief batch = posterior_joint(log, inputs->features, inputs->prior, inputs->cfg.sigma2);
    CHECK((algo.joint_belief().mean - batch.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((algo.joint_belief().cov - batch.cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("with gamma = 0 the algorithm is action-centered TS against eta = 0") {
    const CalibrationBundle& b = shared_bundle();
    const ParticipantEnv env = env_for(2);
    auto inputs = make_inputs(b, 0.0, 0.5);
    HeartStepsAlgorithm algo(inputs);
    HeartStepsAlgorithm bandit(inputs, HeartStepsAlgorithm::Proxy::Disabled);
    const Trajectory a = run_episode(env, algo, inputs->cfg, 8);
    const Trajectory c = run_episode(env, bandit, inputs->cfg, 8);
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].eta == 0.0);
        CHECK(std::abs(a.steps[i].pre_clip - c.steps[i].pre_clip) < 1e-12);
        CHECK(a.steps[i].record.action == c.steps[i].record.action);
    }
    // Step-for-step against the selector, replaying the same history.
    HeartStepsAlgorithm probe(inputs);
    probe.reset();
    HistoryLog so_far;
    for (const auto& s : a.steps) {
        if (s.record.context.available) {
            const FeaturePair p = inputs->features(s.record.context.raw, s.record.context.dosage);
            CHECK(std::abs(treatment_prob(p.f, probe.beta_belief(), 0.0) - s.pre_clip) < 1e-12);
        }
        so_far.push_back(s.record);
        if (s.record.context.slot == 5) probe.nightly(so_far);
    }
}

TEST_CASE("w = 0 keeps the initial proxy for the whole study") {
    const CalibrationBundle& b = shared_bundle();
    const ParticipantEnv env = env_for(3);
    auto inputs = make_inputs(b, 0.9, 0.0);
    HeartStepsAlgorithm algo(inputs);
    const Trajectory t = run_episode(env, algo, inputs->cfg, 4);
    for (std::size_t x = 0; x < inputs->initial.eta.size(); ++x)
        CHECK(algo.tables().eta[x] == inputs->initial.eta[x]);
    for (const auto& s : t.steps)
        if (s.record.context.available)
            CHECK(s.eta == eta_lookup(inputs->initial, s.record.context.dosage));
}

TEST_CASE("learned proxy tables are a consistent blend") {
    const CalibrationBundle& b = shared_bundle();
    const ParticipantEnv env = env_for(4);
    auto inputs = make_inputs(b, 0.9, 0.5);
    HeartStepsAlgorithm algo(inputs);
    run_episode(env, algo, inputs->cfg, 5);
    const ProxyTables& tb = algo.tables();
    CHECK(tb.w == 0.5);
    CHECK(tb.gamma == 0.9);
    for (std::size_t x = 0; x < tb.eta.size(); ++x)
        CHECK(tb.eta[x] == doctest::Approx(0.9 * (tb.H[x][0] - tb.H[x][1])).epsilon(1e-12));
    const DosageTable H = compute_H(tb.V, inputs->kernel, tb.p_avail);
    for (std::size_t x = 0; x < H.size(); ++x)
        for (int a = 0; a < 2; ++a)
            CHECK(tb.H[x][a] ==
                  doctest::Approx(0.5 * inputs->h1.H[x][a] + 0.5 * H[x][a]).epsilon(1e-10));
}
