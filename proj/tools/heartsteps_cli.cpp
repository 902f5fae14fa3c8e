// heartsteps command-line tool. Every command writes into an output
// directory together with a manifest.json recording how it was produced.

#include "heartsteps/heartsteps.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestName = "manifest.json";

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(hs_status s, const std::string& context) {
    if (s != HS_OK) {
        std::string msg = context + ": " + hs_status_string(s);
        const std::string detail = hs_last_error();
        if (!detail.empty()) msg += ": " + detail;
        throw Failure(msg);
    }
}

template <typename T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<hs_config, Deleter<hs_config, hs_config_free>>;
using CorpusPtr = std::unique_ptr<hs_corpus, Deleter<hs_corpus, hs_corpus_free>>;
using BundlePtr = std::unique_ptr<hs_bundle, Deleter<hs_bundle, hs_bundle_free>>;
using TuningPtr = std::unique_ptr<hs_tuning, Deleter<hs_tuning, hs_tuning_free>>;

std::string sha256(const fs::path& p) {
    char out[65];
    check(hs_sha256_file(p.c_str(), out), "hashing " + p.string());
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ConfigPtr load_config(const std::string& path) {
    hs_config* cfg = nullptr;
    if (path.empty())
        check(hs_config_default(&cfg), "default config");
    else
        check(hs_config_read(path.c_str(), &cfg), "reading config " + path);
    return ConfigPtr(cfg);
}

Json config_snapshot(const hs_config* cfg) {
    char* text = nullptr;
    check(hs_config_to_json(cfg, &text), "serializing config");
    Json j = Json::parse(text);
    hs_string_free(text);
    return j;
}

CorpusPtr load_corpus(const std::string& path) {
    hs_corpus* c = nullptr;
    check(hs_corpus_read(path.c_str(), &c), "reading corpus " + path);
    return CorpusPtr(c);
}

BundlePtr load_bundle(const std::string& path) {
    hs_bundle* b = nullptr;
    check(hs_bundle_read(path.c_str(), &b), "reading bundle " + path);
    return BundlePtr(b);
}

std::string absolute(const std::string& p) {
    return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

// Options shared by every command.
struct Common {
    std::string config;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string out;
};

// Collects what the manifest needs while a command runs.
class Run {
public:
    Run(std::string command, const Common& common) : command_(std::move(command)), common_(common) {
        started_ = utc_now();
        dir_ = common.out;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Failure("cannot create " + dir_.string() + ": " + ec.message());
        argv_ = {command_, "--seed", std::to_string(common.seed), "--jobs",
                 std::to_string(common.jobs)};
        if (!common.config.empty()) arg("--config", absolute(common.config));
    }

    const fs::path& dir() const { return dir_; }
    fs::path output(const std::string& relative) {
        outputs_.push_back(relative);
        return dir_ / relative;
    }
    void arg(const std::string& flag, const std::string& value) {
        argv_.push_back(flag);
        argv_.push_back(value);
    }
    void flag(const std::string& f) { argv_.push_back(f); }
    void input(const std::string& role, const std::string& path) {
        inputs_[role] = {{"path", absolute(path)}, {"sha256", sha256(path)}};
        arg("--" + role, absolute(path));
    }
    void set_config(Json j) { config_ = std::move(j); }
    void add_outputs_under(const std::string& subdir) {
        const fs::path root = dir_ / subdir;
        if (!fs::exists(root)) return;
        std::vector<std::string> files;
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir_).generic_string());
        std::sort(files.begin(), files.end());
        for (auto& f : files) outputs_.push_back(f);
    }

    void finish(Json results = Json::object()) {
        Json outputs = Json::object();
        for (const auto& rel : outputs_) outputs[rel] = sha256(dir_ / rel);
        Json m;
        m["command"] = command_;
        m["argv"] = argv_;
        m["seed"] = common_.seed;
        m["jobs"] = common_.jobs;
        m["software_version"] = hs_version();
        m["config"] = config_;
        m["inputs"] = inputs_;
        if (inputs_.contains("corpus")) m["corpus_sha256"] = inputs_["corpus"]["sha256"];
        m["outputs"] = outputs;
        m["results"] = std::move(results);
        m["started_at"] = started_;
        m["finished_at"] = utc_now();
        std::ofstream f(dir_ / kManifestName, std::ios::binary);
        f << m.dump(2) << '\n';
        if (!f) throw Failure("cannot write manifest in " + dir_.string());
    }

private:
    std::string command_;
    Common common_;
    fs::path dir_;
    std::string started_;
    std::vector<std::string> argv_;
    std::vector<std::string> outputs_;
    Json inputs_ = Json::object();
    Json config_;
};

std::string join(const std::vector<double>& v) {
    std::string s;
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        if (i) s += ',';
        s += buf;
    }
    return s;
}

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
    auto* cfg = cmd->add_option("--config", c.config, "JSON config file (AlgoConfig fields)");
    if (needs_config) cfg->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "master random seed")->required();
    cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", c.out, "output directory")->required();
}

int run_cli(int argc, char** argv);

// Re-executes the command recorded in a manifest into a new directory and
// compares every recorded output hash.
int rerun(const std::string& manifest_path, const std::string& out_dir,
          std::optional<int> jobs) {
    std::ifstream in(manifest_path);
    if (!in) throw Failure("cannot open " + manifest_path);
    const Json m = Json::parse(in);
    std::vector<std::string> args{"heartsteps"};
    const auto recorded = m.at("argv").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < recorded.size(); ++i) {
        args.push_back(recorded[i]);
        if (jobs && recorded[i] == "--jobs" && i + 1 < recorded.size()) {
            args.push_back(std::to_string(*jobs));
            ++i;
        }
    }
    args.push_back("--out");
    args.push_back(out_dir);
    std::vector<char*> cargv;
    for (auto& a : args) cargv.push_back(a.data());
    const int rc = run_cli(static_cast<int>(cargv.size()), cargv.data());
    if (rc != 0) return rc;

    int mismatches = 0;
    for (const auto& [rel, hash] : m.at("outputs").items()) {
        const fs::path p = fs::path(out_dir) / rel;
        const std::string now = fs::exists(p) ? sha256(p) : std::string("missing");
        if (now != hash.get<std::string>()) {
            std::cerr << "mismatch: " << rel << '\n';
            ++mismatches;
        }
    }
    std::cout << "rerun: " << m.at("outputs").size() - static_cast<std::size_t>(mismatches)
              << '/' << m.at("outputs").size() << " outputs identical\n";
    return mismatches == 0 ? 0 : 3;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"HeartSteps reinforcement-learning simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(hs_version()));

    // gen-corpus
    Common gen;
    int participants = 0, days = 0;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic historical corpus");
    add_common(gen_cmd, gen, true);
    gen_cmd->add_option("--participants", participants, "override the participant count");
    gen_cmd->add_option("--days", days, "override the study length in days");

    // calibrate
    Common cal;
    std::string cal_corpus;
    auto* cal_cmd = app.add_subcommand("calibrate", "fit priors, noise variance and H1");
    add_common(cal_cmd, cal, true);
    cal_cmd->add_option("--corpus", cal_corpus, "corpus CSV")->required()->check(CLI::ExistingFile);

    // tune
    Common tune;
    std::string tune_corpus, tune_bundle;
    std::vector<double> gammas, ws;
    int tune_reps = 96;
    auto* tune_cmd = app.add_subcommand("tune", "grid search over (gamma, w)");
    add_common(tune_cmd, tune, true);
    tune_cmd->add_option("--corpus", tune_corpus)->required()->check(CLI::ExistingFile);
    tune_cmd->add_option("--bundle", tune_bundle)->required()->check(CLI::ExistingFile);
    tune_cmd->add_option("--gammas", gammas, "comma-separated gamma grid")->delimiter(',');
    tune_cmd->add_option("--ws", ws, "comma-separated w grid")->delimiter(',');
    tune_cmd->add_option("--reps", tune_reps, "replications per environment")
        ->check(CLI::PositiveNumber);

    // evaluate
    Common ev;
    std::string ev_corpus;
    int folds = 3, ev_reps = 96, ev_tuning_reps = 0;
    bool null_comparison = false, no_traj = false;
    std::vector<double> ev_gammas, ev_ws;
    auto* ev_cmd = app.add_subcommand("evaluate", "cross-validated comparison with the TS bandit");
    add_common(ev_cmd, ev, true);
    ev_cmd->add_option("--corpus", ev_corpus)->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--folds", folds)->check(CLI::Range(2, 1000));
    ev_cmd->add_option("--reps", ev_reps, "test replications per participant and arm")
        ->check(CLI::PositiveNumber);
    ev_cmd->add_option("--tuning-reps", ev_tuning_reps, "grid-search replications (default: --reps)");
    ev_cmd->add_option("--gammas", ev_gammas)->delimiter(',');
    ev_cmd->add_option("--ws", ev_ws)->delimiter(',');
    ev_cmd->add_flag("--null-comparison", null_comparison, "run the bandit on both arms");
    ev_cmd->add_flag("--no-trajectories", no_traj, "skip per-decision logs");

    // simulate
    Common sim;
    std::string sim_corpus, sim_bundle, participant, policy = "proposed";
    auto* sim_cmd = app.add_subcommand("simulate", "run one participant and log decisions");
    add_common(sim_cmd, sim, true);
    sim_cmd->add_option("--corpus", sim_corpus)->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--bundle", sim_bundle)->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--participant", participant)->required();
    sim_cmd->add_option("--policy", policy)->check(CLI::IsMember({"proposed", "bandit"}));

    // rerun
    std::string manifest, rerun_out;
    std::optional<int> rerun_jobs;
    auto* re_cmd = app.add_subcommand("rerun", "repeat a recorded run and compare output hashes");
    re_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    re_cmd->add_option("--out", rerun_out)->required();
    re_cmd->add_option("--jobs", rerun_jobs)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*gen_cmd) {
        ConfigPtr cfg = load_config(gen.config);
        if (participants > 0 || days > 0) {
            Json j = config_snapshot(cfg.get());
            if (participants > 0) j["corpus"]["participants"] = participants;
            if (days > 0) j["corpus"]["days"] = days;
            hs_config* c = nullptr;
            check(hs_config_parse(j.dump().c_str(), &c), "config overrides");
            cfg.reset(c);
        }
        Run run("gen-corpus", gen);
        if (participants > 0) run.arg("--participants", std::to_string(participants));
        if (days > 0) run.arg("--days", std::to_string(days));
        run.set_config(config_snapshot(cfg.get()));
        hs_corpus* c = nullptr;
        check(hs_corpus_generate(cfg.get(), gen.seed, &c), "generating corpus");
        CorpusPtr corpus(c);
        check(hs_corpus_write(corpus.get(), run.output("corpus.csv").c_str()), "writing corpus");
        run.finish({{"rows", hs_corpus_rows(corpus.get())},
                    {"participants", hs_corpus_participants(corpus.get())}});
        std::cout << "wrote " << hs_corpus_rows(corpus.get()) << " rows to "
                  << (run.dir() / "corpus.csv").string() << '\n';
    } else if (*cal_cmd) {
        ConfigPtr cfg = load_config(cal.config);
        Run run("calibrate", cal);
        run.input("corpus", cal_corpus);
        run.set_config(config_snapshot(cfg.get()));
        CorpusPtr corpus = load_corpus(cal_corpus);
        hs_bundle* b = nullptr;
        check(hs_calibrate(corpus.get(), cfg.get(), &b), "calibration");
        BundlePtr bundle(b);
        check(hs_bundle_write(bundle.get(), run.output("bundle.json").c_str()), "writing bundle");
        hs_bundle_info info{};
        check(hs_bundle_info_get(bundle.get(), &info), "bundle info");
        run.finish({{"sigma2", info.sigma2}, {"p_avail", info.p_avail}});
        std::cout << "sigma2 = " << info.sigma2 << ", p_avail = " << info.p_avail << '\n';
    } else if (*tune_cmd) {
        ConfigPtr cfg = load_config(tune.config);
        Run run("tune", tune);
        run.input("corpus", tune_corpus);
        run.input("bundle", tune_bundle);
        run.arg("--reps", std::to_string(tune_reps));
        if (!gammas.empty()) run.arg("--gammas", join(gammas));
        if (!ws.empty()) run.arg("--ws", join(ws));
        run.set_config(config_snapshot(cfg.get()));
        CorpusPtr corpus = load_corpus(tune_corpus);
        BundlePtr bundle = load_bundle(tune_bundle);
        hs_grid_options opts{gammas.empty() ? nullptr : gammas.data(), gammas.size(),
                             ws.empty() ? nullptr : ws.data(), ws.size(), tune_reps, tune.jobs};
        hs_tuning* t = nullptr;
        check(hs_tune(corpus.get(), bundle.get(), &opts, tune.seed, &t), "grid search");
        TuningPtr tuning(t);
        check(hs_tuning_write(tuning.get(), run.output("tuning.json").c_str()), "writing tuning");
        check(hs_bundle_apply_tuning(bundle.get(), tuning.get()), "applying tuning");
        check(hs_bundle_write(bundle.get(), run.output("bundle.json").c_str()), "writing bundle");
        double g = 0, w = 0;
        check(hs_tuning_best(tuning.get(), &g, &w), "tuning result");
        run.finish({{"best_gamma", g}, {"best_w", w}});
        std::cout << "best gamma = " << g << ", w = " << w << '\n';
    } else if (*ev_cmd) {
        ConfigPtr cfg = load_config(ev.config);
        Run run("evaluate", ev);
        run.input("corpus", ev_corpus);
        run.arg("--folds", std::to_string(folds));
        run.arg("--reps", std::to_string(ev_reps));
        if (ev_tuning_reps > 0) run.arg("--tuning-reps", std::to_string(ev_tuning_reps));
        if (!ev_gammas.empty()) run.arg("--gammas", join(ev_gammas));
        if (!ev_ws.empty()) run.arg("--ws", join(ev_ws));
        if (null_comparison) run.flag("--null-comparison");
        if (no_traj) run.flag("--no-trajectories");
        run.set_config(config_snapshot(cfg.get()));
        CorpusPtr corpus = load_corpus(ev_corpus);
        hs_evaluate_options opts{};
        opts.folds = folds;
        opts.reps = ev_reps;
        opts.tuning_reps = ev_tuning_reps;
        opts.grid = {ev_gammas.empty() ? nullptr : ev_gammas.data(), ev_gammas.size(),
                     ev_ws.empty() ? nullptr : ev_ws.data(), ev_ws.size(), 0, ev.jobs};
        opts.null_comparison = null_comparison;
        opts.write_trajectories = !no_traj;
        opts.jobs = ev.jobs;
        hs_evaluate_summary s{};
        check(hs_evaluate(corpus.get(), cfg.get(), &opts, ev.seed, run.dir().c_str(), &s),
              "evaluation");
        run.output("report.csv");
        run.output("summary.json");
        run.add_outputs_under("trajectories");
        run.finish({{"n_participants", s.n_participants},
                    {"n_improved", s.n_improved},
                    {"mean_improvement", s.mean_improvement},
                    {"p_value_one_sided", s.p_value}});
        std::cout << "mean improvement = " << s.mean_improvement << " (" << s.n_improved << '/'
                  << s.n_participants << " improved), one-sided p = " << s.p_value << '\n';
    } else if (*sim_cmd) {
        Run run("simulate", sim);
        run.input("corpus", sim_corpus);
        run.input("bundle", sim_bundle);
        run.arg("--participant", participant);
        run.arg("--policy", policy);
        if (!sim.config.empty()) run.set_config(config_snapshot(load_config(sim.config).get()));
        CorpusPtr corpus = load_corpus(sim_corpus);
        BundlePtr bundle = load_bundle(sim_bundle);
        double total = 0.0;
        check(hs_simulate(corpus.get(), bundle.get(), participant.c_str(),
                          policy == "bandit" ? HS_POLICY_BANDIT : HS_POLICY_PROPOSED, sim.seed,
                          run.output("trajectory.csv").c_str(), &total),
              "simulation");
        run.finish({{"total_reward", total}});
        std::cout << "total reward = " << total << '\n';
    } else if (*re_cmd) {
        return rerun(manifest, rerun_out, rerun_jobs);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const Failure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
