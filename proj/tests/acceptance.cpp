// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fail.

#include "heartsteps/algorithm.hpp"
#include "heartsteps/calibration.hpp"
#include "heartsteps/experiment.hpp"
#include "heartsteps/posterior.hpp"
#include "heartsteps/proxy.hpp"
#include "heartsteps/selector.hpp"
#include "heartsteps/serialization.hpp"

#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using namespace heartsteps;
using namespace testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int g_jobs = 1;
fs::path g_workdir;

Outcome posterior_oracle() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> len(0, 50);
    std::uniform_real_distribution<double> u(0.0, 1.0), dose(0.0, 19.9);
    std::normal_distribution<double> z(0.0, 1.0);
    const FeatureMap fm(nominal_scaler(), 0.95);
    double worst_mu = 0.0, worst_cov = 0.0;
    const auto start = std::chrono::steady_clock::now();
    for (int inst = 0; inst < 200; ++inst) {
        const JointPrior prior =
            JointPrior::from_blocks(random_belief(rng, kDimG), random_belief(rng, kDimF));
        const double sigma2 = 0.2 + 2.0 * u(rng);
        HistoryLog h(static_cast<std::size_t>(len(rng)));
        std::vector<Eigen::VectorXd> rows;
        std::vector<double> ys;
        for (auto& r : h) {
            r.context.available = u(rng) < 0.8;
            r.context.raw = random_raw(rng);
            r.context.dosage = dose(rng);
            r.pi = 0.1 + 0.7 * u(rng);
            r.action = r.context.available && u(rng) < r.pi ? 1 : 0;
            r.reward = 3.0 * z(rng);
            if (!r.context.available) continue;
            const FeaturePair p = fm(r.context.raw, r.context.dosage);
            Eigen::VectorXd phi(kDimG + 2 * kDimF);
            phi << p.g, r.pi * p.f, (r.action - r.pi) * p.f;
            rows.push_back(phi);
            ys.push_back(r.reward);
        }
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), kDimG + 2 * kDimF);
        Eigen::VectorXd y(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            X.row(i) = rows[static_cast<std::size_t>(i)].transpose();
            y[i] = ys[static_cast<std::size_t>(i)];
        }
        const GaussianBelief oracle = normal_equations_posterior(X, y, prior.belief(), sigma2);
        const GaussianBelief post = posterior_joint(h, fm, prior, sigma2);
        worst_mu = std::max(worst_mu, (post.mean - oracle.mean).cwiseAbs().maxCoeff());
        worst_cov = std::max(worst_cov, (post.cov - oracle.cov).cwiseAbs().maxCoeff());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst_mu < 1e-8 && worst_cov < 1e-8 && secs < 10.0,
            "max|dmu| " + fmt("%.2e", worst_mu) + ", max|dSigma| " + fmt("%.2e", worst_cov) +
                ", " + fmt("%.2f", secs) + " s"};
}

Outcome value_iteration_oracle() {
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const DosageKernel k(DosageGrid::uniform(5, 0.95), 0.95, 0.2);
    const std::vector<double> pts(k.grid().points().begin(), k.grid().points().end());
    double worst = 0.0, worst_res = 0.0;
    const auto start = std::chrono::steady_clock::now();
    for (int inst = 0; inst < 50; ++inst) {
        const MarginalRewards r = random_rewards(rng, 5);
        const double p = u(rng), gamma = 0.95 * u(rng);
        const ValueSolution sol = solve_value(r, k, p, gamma);
        worst = std::max(worst, max_abs_diff(sol.V, enumerate_optimal_V(r, pts, 0.95, 0.2, p, gamma)));
        worst_res = std::max(worst_res, bellman_residual(sol.V, r, k, p, gamma));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst < 1e-6 && worst_res < 1e-8 && secs < 30.0,
            "max|dV| " + fmt("%.2e", worst) + ", max residual " + fmt("%.2e", worst_res) + ", " +
                fmt("%.2f", secs) + " s"};
}

Outcome eta_degeneracy() {
    std::mt19937_64 rng(103);
    const FeatureMap fm(nominal_scaler(), 0.95);
    const DosageGrid grid = DosageGrid::uniform(201, 0.95);
    ContextMomentsAccumulator acc;
    for (int i = 0; i < 200; ++i) acc.add(random_raw(rng), fm);
    const ContextMoments mom = acc.moments();
    double worst_a = 0.0, worst_b = 0.0, worst_c = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        RewardCoefficients coef{random_vector(rng, kDimG), random_vector(rng, kDimF),
                                random_vector(rng, kDimG)};
        const DosageKernel k(grid, 0.95, 0.2);
        for (double e : initial_tables(solve_future_value(marginal_rewards(mom, coef, grid, 0.95), k,
                                                          0.8, 0.0),
                                       0.0)
                            .eta)
            worst_a = std::max(worst_a, std::abs(e));

        RewardCoefficients flat = coef;
        flat.alpha_avail[fidx::kDosage] = flat.alpha_unavail[fidx::kDosage] = 0.0;
        flat.beta[fidx::kDosage] = 0.0;
        for (double e : initial_tables(solve_future_value(marginal_rewards(mom, flat, grid, 0.95), k,
                                                          0.8, 0.9),
                                       0.9)
                            .eta)
            worst_b = std::max(worst_b, std::abs(e));

        const DosageKernel same(grid, 0.95, 1.0);
        RewardCoefficients no_effect = coef;
        no_effect.beta.setZero();
        for (double e : initial_tables(solve_future_value(marginal_rewards(mom, no_effect, grid, 0.95),
                                                          same, 0.8, 0.9),
                                       0.9)
                            .eta)
            worst_c = std::max(worst_c, std::abs(e));
    }
    return {worst_a <= 1e-12 && worst_b <= 1e-12 && worst_c <= 1e-12,
            "max|eta| gamma=0 " + fmt("%.1e", worst_a) + ", no dosage terms " +
                fmt("%.1e", worst_b) + ", equal kernels " + fmt("%.1e", worst_c)};
}

struct Study {
    Corpus corpus;
    CalibrationBundle bundle;
    std::vector<ParticipantEnv> envs;
};

const Study& study() {
    static const Study s = [] {
        Study out;
        out.corpus = generate_corpus(CorpusSpec{}, 2024);
        out.bundle = calibrate(out.corpus, AlgoConfig{});
        out.envs = build_envs(out.corpus, out.bundle.population, out.bundle.features(),
                              out.bundle.cfg, 2024);
        return out;
    }();
    return s;
}

Outcome clip_range() {
    const Study& s = study();
    auto inputs = make_inputs(s.bundle, 0.9, 0.5);
    HeartStepsAlgorithm algo(inputs);
    double lo = 1.0, hi = 0.0, pre_lo = 1.0, pre_hi = 0.0;
    std::size_t decisions = 0;
    bool ok = true;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        const Trajectory t = run_episode(s.envs[rep % s.envs.size()], algo, inputs->cfg, rep);
        ok = ok && t.steps.size() == 450;
        for (const auto& st : t.steps) {
            if (!st.record.context.available) continue;
            ++decisions;
            lo = std::min(lo, st.record.pi);
            hi = std::max(hi, st.record.pi);
            pre_lo = std::min(pre_lo, st.pre_clip);
            pre_hi = std::max(pre_hi, st.pre_clip);
        }
    }
    ok = ok && lo >= 0.1 && hi <= 0.8;
    return {ok, std::to_string(decisions) + " decisions, pi in [" + fmt("%.17g", lo) + ", " +
                    fmt("%.17g", hi) + "], pre-clip in [" + fmt("%.3g", pre_lo) + ", " +
                    fmt("%.3g", pre_hi) + "]"};
}

Outcome bandit_reduction() {
    const Study& s = study();
    auto inputs = make_inputs(s.bundle, 0.0, 0.5);
    double worst = 0.0;
    std::size_t compared = 0;
    bool actions_match = true;
    for (std::size_t e = 0; e < 10; ++e) {
        HeartStepsAlgorithm algo(inputs);
        const Trajectory t = run_episode(s.envs[e], algo, inputs->cfg, 500 + e);
        // Independent replay: action-centered TS with eta = 0 on the same history.
        HeartStepsAlgorithm probe(inputs, HeartStepsAlgorithm::Proxy::Disabled);
        const Trajectory b = run_episode(s.envs[e], probe, inputs->cfg, 500 + e);
        probe.reset();
        HistoryLog so_far;
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            const auto& st = t.steps[i];
            if (st.record.context.available) {
                const FeaturePair p = inputs->features(st.record.context.raw, st.record.context.dosage);
                const double ts = treatment_prob(p.f, probe.beta_belief(), 0.0);
                worst = std::max(worst, std::abs(ts - st.pre_clip));
                worst = std::max(worst, std::abs(b.steps[i].pre_clip - st.pre_clip));
                actions_match = actions_match && b.steps[i].record.action == st.record.action;
                ++compared;
            }
            so_far.push_back(st.record);
            if (st.record.context.slot == inputs->cfg.slots_per_day) probe.nightly(so_far);
        }
    }
    return {worst <= 1e-12 && actions_match && compared > 0,
            std::to_string(compared) + " decisions, max|dp| " + fmt("%.1e", worst)};
}

Outcome delayed_effect_benefit() {
    const Study& s = study();
    CvOptions opts;
    opts.folds = 3;
    opts.reps = 24;
    opts.tuning_reps = 24;
    opts.keep_trajectories = false;
    opts.jobs = g_jobs;
    const auto start = std::chrono::steady_clock::now();
    const CvReport r = cross_validate(s.corpus, AlgoConfig{}, opts, 2024);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::size_t improved = 0;
    for (const auto& p : r.participants) improved += p.improvement_mean > 0.0 ? 1 : 0;
    std::string tuned;
    for (const auto& f : r.folds)
        tuned += " (" + fmt("%g", f.tuning.best_gamma) + ", " + fmt("%g", f.tuning.best_w) + ")";
    return {r.mean_improvement > 0.0 && r.p_value < 0.05,
            "mean improvement " + fmt("%.3f", r.mean_improvement) + ", " +
                std::to_string(improved) + "/" + std::to_string(r.participants.size()) +
                " improved, one-sided p " + fmt("%.3g", r.p_value) + ", tuned (gamma, w):" + tuned +
                ", " + fmt("%.0f", secs) + " s"};
}

Outcome grid_shape() {
    const Study& s = study();
    const std::vector<double> gammas(kDefaultGammaGrid.begin(), kDefaultGammaGrid.end());
    const std::vector<double> ws(kDefaultWGrid.begin(), kDefaultWGrid.end());
    const TuningResult a = grid_search(s.envs, s.bundle, gammas, ws, 2, 77, g_jobs);
    const TuningResult b = grid_search(s.envs, s.bundle, gammas, ws, 2, 77, 1);
    bool shape = a.mean_reward.size() == 6;
    for (const auto& row : a.mean_reward) shape = shape && row.size() == 6;
    const bool in_grid = std::find(gammas.begin(), gammas.end(), a.best_gamma) != gammas.end() &&
                         std::find(ws.begin(), ws.end(), a.best_w) != ws.end();
    const std::string ja = tuning_to_json(a).dump(), jb = tuning_to_json(b).dump();
    return {shape && in_grid && ja == jb,
            std::string("6x6 table ") + (shape ? "yes" : "no") + ", argmax (" +
                fmt("%g", a.best_gamma) + ", " + fmt("%g", a.best_w) + "), rerun " +
                (ja == jb ? "byte-identical" : "differs")};
}

Outcome dosage_bound() {
    std::mt19937_64 rng(108);
    std::bernoulli_distribution coin(0.5);
    double lo = 1e300, hi = -1e300;
    for (int seq = 0; seq < 100000; ++seq) {
        double x = 0.0;
        const bool saturate = seq % 10 == 0;
        for (int t = 0; t < 450; ++t) {
            x = update_dosage(x, saturate || coin(rng), 0.95);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    double x = 0.0;
    for (int t = 0; t < 100000; ++t) x = update_dosage(x, true, 0.95);
    hi = std::max(hi, x);
    return {lo >= 0.0 && hi < 20.0, "range [" + fmt("%.17g", lo) + ", " + fmt("%.17g", hi) + "]"};
}

Outcome gaussian_probability() {
    std::mt19937_64 rng(109);
    std::normal_distribution<double> z(0.0, 1.0);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const GaussianBelief b = random_belief(rng, kDimF);
        const Eigen::VectorXd f = random_vector(rng, kDimF);
        const double eta = z(rng);
        const Eigen::MatrixXd L = b.cov.llt().matrixL();
        int hits = 0;
        Eigen::VectorXd u(kDimF);
        for (int d = 0; d < 1000000; ++d) {
            for (Eigen::Index k = 0; k < kDimF; ++k) u[k] = z(rng);
            hits += f.dot(b.mean + L * u) > eta ? 1 : 0;
        }
        worst = std::max(worst, std::abs(treatment_prob(f, b, eta) - hits / 1e6));
    }
    return {worst < 2e-3, "max|dp| " + fmt("%.2e", worst) + " over 20 beliefs"};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome replay_determinism() {
    const fs::path dir = g_workdir / "replay";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = HEARTSTEPS_CLI;
    auto run = [&](const std::string& args) {
        const std::string cmd = "'" + cli + "' " + args + " > '" + (dir / "log.txt").string() + "' 2>&1";
        return std::system(cmd.c_str());
    };
    const std::string jobs = std::to_string(g_jobs);
    if (run("gen-corpus --seed 5 --participants 9 --out '" + (dir / "gen").string() + "'") != 0)
        return {false, "gen-corpus failed"};
    if (run("evaluate --seed 6 --jobs " + jobs + " --corpus '" + (dir / "gen/corpus.csv").string() +
            "' --reps 2 --tuning-reps 1 --out '" + (dir / "a").string() + "'") != 0)
        return {false, "evaluate failed"};
    const int rc = run("rerun --manifest '" + (dir / "a/manifest.json").string() + "' --jobs 1 --out '" +
                       (dir / "b").string() + "'");
    const Json manifest = read_json_file(dir / "a/manifest.json");
    std::size_t same = 0, total = 0;
    for (const auto& [rel, hash] : manifest.at("outputs").items()) {
        ++total;
        const fs::path pa = dir / "a" / rel, pb = dir / "b" / rel;
        if (fs::exists(pb) && read_file(pa) == read_file(pb)) ++same;
    }
    return {rc == 0 && total > 0 && same == total,
            std::to_string(same) + "/" + std::to_string(total) +
                " outputs identical after rerun from the manifest (rerun exit " +
                std::to_string(rc) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
    g_jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    g_workdir = fs::current_path() / "acceptance_work";
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--workdir" && i + 1 < argc) {
            g_workdir = argv[++i];
        } else if (a == "--jobs" && i + 1 < argc) {
            g_jobs = std::max(1, std::atoi(argv[++i]));
        } else if (a == "--only" && i + 1 < argc) {
            only.push_back(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--workdir DIR] [--jobs N] [--only K]...\n";
            return 2;
        }
    }
    fs::create_directories(g_workdir);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"posterior matches the normal-equations oracle", posterior_oracle},
        {"value iteration matches policy enumeration", value_iteration_oracle},
        {"eta vanishes in the degenerate cases", eta_degeneracy},
        {"probabilities stay in [0.1, 0.8]", clip_range},
        {"gamma = 0 reduces to action-centered TS", bandit_reduction},
        {"proposed beats the TS bandit in cross-validation", delayed_effect_benefit},
        {"default grid: 6x6 table, deterministic", grid_shape},
        {"dosage stays in [0, 20)", dosage_bound},
        {"closed-form probability matches Monte Carlo", gaussian_probability},
        {"evaluate reruns hash-identically from its manifest", replay_determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  "
                  << criteria[i].first << "  [" << o.detail << "]" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
