#include "heartsteps/experiment.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/rng.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace heartsteps {

namespace {

constexpr std::uint64_t kTagExtension = 0x657874;
constexpr std::uint64_t kTagTuning = 0x74756e65;
constexpr std::uint64_t kTagTest = 0x74657374;
constexpr std::uint64_t kTagFolds = 0x666f6c64;

}  // namespace

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
            }
        }
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
    threads.clear();
    if (error) std::rethrow_exception(error);
}

std::uint64_t extension_seed(std::uint64_t master, std::size_t index) {
    return derive_seed(master, {kTagExtension, index});
}

std::vector<ParticipantEnv> build_envs(const Corpus& corpus, const RewardCoefficients& truth,
                                       const FeatureMap& features, const AlgoConfig& cfg,
                                       std::uint64_t seed) {
    std::vector<ParticipantEnv> envs;
    envs.reserve(corpus.participants().size());
    for (std::size_t u = 0; u < corpus.participants().size(); ++u)
        envs.push_back(make_env(corpus.participant_rows(u), truth, features, cfg,
                                extension_seed(seed, u)));
    return envs;
}

std::shared_ptr<const AlgorithmInputs> make_inputs(const CalibrationBundle& bundle, double gamma,
                                                   double w, const FutureValue& h1) {
    AlgoConfig cfg = bundle.cfg;
    cfg.gamma = gamma;
    cfg.w = w;
    cfg.sigma2 = bundle.sigma2;
    return make_algorithm_inputs(cfg, bundle.features(), bundle.joint_prior(),
                                 bundle.prior_unavail, h1);
}

std::shared_ptr<const AlgorithmInputs> make_inputs(const CalibrationBundle& bundle, double gamma,
                                                   double w) {
    if (gamma == bundle.cfg.gamma && bundle.h1.H.size() == bundle.h1.grid.size() &&
        !bundle.h1.H.empty())
        return make_inputs(bundle, gamma, w, bundle.h1);
    return make_inputs(bundle, gamma, w, initial_H(bundle, gamma));
}

ThompsonBandit make_bandit(const CalibrationBundle& bundle) {
    AlgoConfig cfg = bundle.cfg;
    cfg.sigma2 = bundle.sigma2;
    return ThompsonBandit(cfg, bundle.features(),
                          BanditBelief::from_blocks(bundle.prior_alpha0, bundle.prior_beta));
}

TuningResult grid_search(const std::vector<ParticipantEnv>& envs, const CalibrationBundle& bundle,
                         const std::vector<double>& gammas, const std::vector<double>& ws, int reps,
                         std::uint64_t seed, int jobs) {
    if (envs.empty()) throw InvalidArgument("grid search needs at least one environment");
    if (gammas.empty() || ws.empty()) throw InvalidArgument("grid search needs nonempty grids");
    if (reps <= 0) throw InvalidArgument("replication count must be positive");

    std::vector<std::shared_ptr<const AlgorithmInputs>> cells;
    cells.reserve(gammas.size() * ws.size());
    for (double g : gammas) {
        const FutureValue h1 = initial_H(bundle, g);
        for (double w : ws) cells.push_back(make_inputs(bundle, g, w, h1));
    }

    const std::size_t n_env = envs.size();
    const std::size_t n_rep = static_cast<std::size_t>(reps);
    const std::size_t per_cell = n_env * n_rep;
    std::vector<double> totals(cells.size() * per_cell);
    parallel_for(totals.size(), jobs, [&](std::size_t task) {
        const std::size_t cell = task / per_cell;
        const std::size_t e = (task % per_cell) / n_rep;
        const std::size_t r = task % n_rep;
        HeartStepsAlgorithm algo(cells[cell]);
        const Trajectory traj =
            run_episode(envs[e], algo, cells[cell]->cfg, derive_seed(seed, {e, r}));
        totals[task] = traj.total_reward;
    });

    TuningResult out;
    out.gammas = gammas;
    out.ws = ws;
    out.reps = reps;
    out.n_envs = n_env;
    out.mean_reward.assign(gammas.size(), std::vector<double>(ws.size(), 0.0));
    bool have_best = false;
    double best = 0.0;
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
        for (std::size_t wi = 0; wi < ws.size(); ++wi) {
            const std::size_t cell = gi * ws.size() + wi;
            double sum_env = 0.0;
            for (std::size_t e = 0; e < n_env; ++e) {
                double sum_rep = 0.0;
                for (std::size_t r = 0; r < n_rep; ++r)
                    sum_rep += totals[cell * per_cell + e * n_rep + r];
                sum_env += sum_rep / static_cast<double>(n_rep);
            }
            const double mean = sum_env / static_cast<double>(n_env);
            out.mean_reward[gi][wi] = mean;
            const double g = gammas[gi];
            const double w = ws[wi];
            const bool better =
                !have_best || mean > best ||
                (mean == best && (g > out.best_gamma || (g == out.best_gamma && w > out.best_w)));
            if (better) {
                have_best = true;
                best = mean;
                out.best_gamma = g;
                out.best_w = w;
            }
        }
    }
    return out;
}

std::vector<int> assign_folds(std::size_t n_participants, int folds, std::uint64_t seed) {
    if (folds < 2) throw InvalidArgument("cross validation needs at least two folds");
    if (n_participants < static_cast<std::size_t>(folds))
        throw InvalidArgument("fewer participants than folds");
    std::vector<std::size_t> order(n_participants);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, {kTagFolds}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold(n_participants);
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
    return fold;
}

CvReport cross_validate(const Corpus& corpus, const AlgoConfig& cfg, const CvOptions& opts,
                        std::uint64_t seed) {
    cfg.validate();
    if (opts.reps <= 0 || opts.tuning_reps <= 0)
        throw InvalidArgument("replication counts must be positive");
    corpus.check_complete_days(cfg.slots_per_day);
    const auto& users = corpus.participants();
    const std::vector<int> fold_of = assign_folds(users.size(), opts.folds, seed);

    CvReport report;
    report.participants.resize(users.size());
    for (int k = 0; k < opts.folds; ++k) {
        FoldResult fold;
        fold.fold = k;
        std::vector<std::size_t> test_index;
        for (std::size_t u = 0; u < users.size(); ++u) {
            if (fold_of[u] == k) {
                fold.test.push_back(users[u]);
                test_index.push_back(u);
            } else {
                fold.train.push_back(users[u]);
            }
        }
        const Corpus train = corpus.subset(fold.train);
        const Corpus test = corpus.subset(fold.test);

        // Training phase.
        const CalibrationBundle bundle = calibrate(train, cfg);
        fold.sigma2 = bundle.sigma2;
        std::vector<ParticipantEnv> train_envs;
        for (std::size_t u = 0; u < users.size(); ++u) {
            if (fold_of[u] == k) continue;
            train_envs.push_back(make_env(corpus.participant_rows(u), bundle.population,
                                          bundle.features(), cfg, extension_seed(seed, u)));
        }
        fold.tuning = grid_search(train_envs, bundle, opts.gammas, opts.ws, opts.tuning_reps,
                                  derive_seed(seed, {kTagTuning, static_cast<std::uint64_t>(k)}),
                                  opts.jobs);

        // Testing phase: rewards generated from coefficients fit on the held-out fold.
        const CalibrationBundle test_fit = calibrate(test, cfg);
        std::vector<ParticipantEnv> test_envs;
        for (std::size_t u : test_index)
            test_envs.push_back(make_env(corpus.participant_rows(u), test_fit.population,
                                         test_fit.features(), cfg, extension_seed(seed, u)));

        const auto inputs = make_inputs(bundle, fold.tuning.best_gamma, fold.tuning.best_w);
        const ThompsonBandit bandit = make_bandit(bundle);
        const std::size_t n_rep = static_cast<std::size_t>(opts.reps);
        std::vector<double> proposed(test_envs.size() * n_rep), comparator(proposed.size());
        std::vector<Trajectory> logs_p(test_envs.size()), logs_c(test_envs.size());
        parallel_for(2 * proposed.size(), opts.jobs, [&](std::size_t task) {
            const bool comparator_arm = task >= proposed.size();
            const std::size_t idx = comparator_arm ? task - proposed.size() : task;
            const std::size_t e = idx / n_rep;
            const std::size_t r = idx % n_rep;
            const std::uint64_t episode_seed =
                derive_seed(seed, {kTagTest, static_cast<std::uint64_t>(k), test_index[e], r});
            Trajectory traj;
            if (comparator_arm || opts.null_comparison) {
                ThompsonBandit policy = bandit;
                traj = run_episode(test_envs[e], policy, inputs->cfg, episode_seed);
            } else {
                HeartStepsAlgorithm policy(inputs);
                traj = run_episode(test_envs[e], policy, inputs->cfg, episode_seed);
            }
            (comparator_arm ? comparator : proposed)[idx] = traj.total_reward;
            if (r == 0 && opts.keep_trajectories)
                (comparator_arm ? logs_c : logs_p)[e] = std::move(traj);
        });

        for (std::size_t e = 0; e < test_envs.size(); ++e) {
            ParticipantResult& pr = report.participants[test_index[e]];
            pr.user_id = users[test_index[e]];
            pr.fold = k;
            std::vector<double> diff(n_rep);
            double sp = 0.0, sc = 0.0;
            for (std::size_t r = 0; r < n_rep; ++r) {
                sp += proposed[e * n_rep + r];
                sc += comparator[e * n_rep + r];
                diff[r] = proposed[e * n_rep + r] - comparator[e * n_rep + r];
            }
            pr.proposed_mean = sp / static_cast<double>(n_rep);
            pr.comparator_mean = sc / static_cast<double>(n_rep);
            pr.improvement_mean = std::accumulate(diff.begin(), diff.end(), 0.0) /
                                  static_cast<double>(n_rep);
            if (n_rep > 1) {
                double ss = 0.0;
                for (double d : diff) ss += (d - pr.improvement_mean) * (d - pr.improvement_mean);
                pr.improvement_se = std::sqrt(ss / static_cast<double>(n_rep - 1)) /
                                    std::sqrt(static_cast<double>(n_rep));
            }
            pr.proposed_log = std::move(logs_p[e]);
            pr.comparator_log = std::move(logs_c[e]);
        }
        report.folds.push_back(std::move(fold));
    }

    std::vector<double> diffs;
    for (const auto& p : report.participants) diffs.push_back(p.improvement_mean);
    report.mean_improvement =
        std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size());
    report.p_value = paired_t_pvalue(diffs);
    return report;
}

double paired_t_pvalue(const std::vector<double>& diffs) {
    const std::size_t n = diffs.size();
    if (n < 2) throw InvalidArgument("paired test needs at least two differences");
    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) return mean > 0.0 ? 0.0 : 1.0;
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(static_cast<double>(n - 1));
    return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace heartsteps
