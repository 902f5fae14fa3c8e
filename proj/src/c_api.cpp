#include "heartsteps/heartsteps.h"

#include "heartsteps/algorithm.hpp"
#include "heartsteps/baselines.hpp"
#include "heartsteps/calibration.hpp"
#include "heartsteps/corpus.hpp"
#include "heartsteps/error.hpp"
#include "heartsteps/experiment.hpp"
#include "heartsteps/serialization.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

using namespace heartsteps;
namespace fs = std::filesystem;

struct hs_config {
    AlgoConfig algo;
    CorpusSpec corpus;
};

struct hs_corpus {
    Corpus corpus;
};

struct hs_bundle {
    BundleDocument doc;
};

struct hs_tuning {
    TuningResult result;
};

namespace {

thread_local std::string last_error;

hs_status fail(hs_status s, const std::string& msg) {
    last_error = msg;
    return s;
}

template <typename F>
hs_status guarded(F&& fn) {
    try {
        last_error.clear();
        fn();
        return HS_OK;
    } catch (const RankDeficient& e) {
        return fail(HS_ERR_RANK_DEFICIENT, e.what());
    } catch (const ConvergenceError& e) {
        return fail(HS_ERR_CONVERGENCE, e.what());
    } catch (const NumericalError& e) {
        return fail(HS_ERR_NUMERICAL, e.what());
    } catch (const ParseError& e) {
        return fail(HS_ERR_PARSE, e.what());
    } catch (const IoError& e) {
        return fail(HS_ERR_IO, e.what());
    } catch (const InvalidArgument& e) {
        return fail(HS_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::bad_alloc&) {
        return fail(HS_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(HS_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(HS_ERR_INTERNAL, "unknown error");
    }
}

void require(const void* p, const char* what) {
    if (p == nullptr) throw InvalidArgument(std::string(what) + " is null");
}

hs_config* config_from(const Json& j) {
    auto cfg = std::make_unique<hs_config>();
    cfg->algo = config_from_json(j);
    if (j.contains("corpus")) cfg->corpus = corpus_spec_from_json(j.at("corpus"));
    return cfg.release();
}

std::vector<double> grid_or(const double* values, std::size_t n, const auto& fallback) {
    if (values == nullptr || n == 0) return {fallback.begin(), fallback.end()};
    return {values, values + n};
}

std::string safe_name(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '-' || c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return out;
}

void write_trajectory_file(const Trajectory& traj, int slots, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_trajectory_csv(traj, slots, out);
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

extern "C" {

const char* hs_version(void) { return HEARTSTEPS_VERSION; }

const char* hs_status_string(hs_status status) {
    switch (status) {
        case HS_OK: return "ok";
        case HS_ERR_INVALID_ARGUMENT: return "invalid argument";
        case HS_ERR_PARSE: return "parse error";
        case HS_ERR_IO: return "i/o error";
        case HS_ERR_NUMERICAL: return "numerical error";
        case HS_ERR_RANK_DEFICIENT: return "rank-deficient design";
        case HS_ERR_CONVERGENCE: return "value iteration did not converge";
        case HS_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* hs_last_error(void) { return last_error.c_str(); }

hs_status hs_config_default(hs_config** out) {
    return guarded([&] {
        require(out, "out");
        *out = new hs_config{};
    });
}

hs_status hs_config_read(const char* path, hs_config** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = config_from(read_json_file(path));
    });
}

hs_status hs_config_parse(const char* json, hs_config** out) {
    return guarded([&] {
        require(json, "json");
        require(out, "out");
        Json j;
        try {
            j = Json::parse(json);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(e.what());
        }
        *out = config_from(j);
    });
}

hs_status hs_config_to_json(const hs_config* cfg, char** out) {
    return guarded([&] {
        require(cfg, "config");
        require(out, "out");
        Json j = config_to_json(cfg->algo);
        j["corpus"] = corpus_spec_to_json(cfg->corpus);
        const std::string s = j.dump(2);
        char* buf = new char[s.size() + 1];
        std::memcpy(buf, s.c_str(), s.size() + 1);
        *out = buf;
    });
}

void hs_config_free(hs_config* cfg) { delete cfg; }

hs_status hs_corpus_generate(const hs_config* cfg, uint64_t seed, hs_corpus** out) {
    return guarded([&] {
        require(cfg, "config");
        require(out, "out");
        *out = new hs_corpus{generate_corpus(cfg->corpus, seed)};
    });
}

hs_status hs_corpus_read(const char* path, hs_corpus** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new hs_corpus{read_corpus_csv(std::string(path))};
    });
}

hs_status hs_corpus_write(const hs_corpus* corpus, const char* path) {
    return guarded([&] {
        require(corpus, "corpus");
        require(path, "path");
        write_corpus_csv(corpus->corpus, std::string(path));
    });
}

size_t hs_corpus_rows(const hs_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

size_t hs_corpus_participants(const hs_corpus* corpus) {
    return corpus ? corpus->corpus.participants().size() : 0;
}

const char* hs_corpus_participant_id(const hs_corpus* corpus, size_t i) {
    if (corpus == nullptr || i >= corpus->corpus.participants().size()) return nullptr;
    return corpus->corpus.participants()[i].c_str();
}

void hs_corpus_free(hs_corpus* corpus) { delete corpus; }

hs_status hs_calibrate(const hs_corpus* corpus, const hs_config* cfg, hs_bundle** out) {
    return guarded([&] {
        require(corpus, "corpus");
        require(cfg, "config");
        require(out, "out");
        *out = new hs_bundle{{calibrate(corpus->corpus, cfg->algo), std::nullopt}};
    });
}

hs_status hs_bundle_read(const char* path, hs_bundle** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new hs_bundle{bundle_from_json(read_json_file(path))};
    });
}

hs_status hs_bundle_write(const hs_bundle* bundle, const char* path) {
    return guarded([&] {
        require(bundle, "bundle");
        require(path, "path");
        write_json_file(bundle_to_json(bundle->doc), path);
    });
}

hs_status hs_bundle_info_get(const hs_bundle* bundle, hs_bundle_info* out) {
    return guarded([&] {
        require(bundle, "bundle");
        require(out, "out");
        const CalibrationBundle& b = bundle->doc.bundle;
        *out = {b.sigma2, b.p_avail, b.cfg.gamma, b.cfg.w, b.n_participants, b.n_rows,
                bundle->doc.tuning ? 1 : 0};
    });
}

void hs_bundle_free(hs_bundle* bundle) { delete bundle; }

hs_status hs_tune(const hs_corpus* corpus, const hs_bundle* bundle, const hs_grid_options* opts,
                  uint64_t seed, hs_tuning** out) {
    return guarded([&] {
        require(corpus, "corpus");
        require(bundle, "bundle");
        require(out, "out");
        const hs_grid_options o = opts ? *opts : hs_grid_options{};
        const CalibrationBundle& b = bundle->doc.bundle;
        const auto envs = build_envs(corpus->corpus, b.population, b.features(), b.cfg, seed);
        *out = new hs_tuning{grid_search(envs, b, grid_or(o.gammas, o.n_gammas, kDefaultGammaGrid),
                                         grid_or(o.ws, o.n_ws, kDefaultWGrid),
                                         o.reps > 0 ? o.reps : kDefaultReplications, seed,
                                         o.jobs)};
    });
}

hs_status hs_tuning_best(const hs_tuning* tuning, double* gamma, double* w) {
    return guarded([&] {
        require(tuning, "tuning");
        if (gamma) *gamma = tuning->result.best_gamma;
        if (w) *w = tuning->result.best_w;
    });
}

hs_status hs_tuning_cell(const hs_tuning* tuning, size_t gi, size_t wi, double* out) {
    return guarded([&] {
        require(tuning, "tuning");
        require(out, "out");
        const auto& t = tuning->result;
        if (gi >= t.gammas.size() || wi >= t.ws.size())
            throw InvalidArgument("grid cell index out of range");
        *out = t.mean_reward[gi][wi];
    });
}

hs_status hs_tuning_write(const hs_tuning* tuning, const char* path) {
    return guarded([&] {
        require(tuning, "tuning");
        require(path, "path");
        write_json_file(tuning_to_json(tuning->result), path);
    });
}

hs_status hs_bundle_apply_tuning(hs_bundle* bundle, const hs_tuning* tuning) {
    return guarded([&] {
        require(bundle, "bundle");
        require(tuning, "tuning");
        CalibrationBundle& b = bundle->doc.bundle;
        AlgoConfig cfg = b.cfg;
        cfg.gamma = tuning->result.best_gamma;
        cfg.w = tuning->result.best_w;
        cfg.validate();
        FutureValue h1 = initial_H(b, cfg.gamma);
        b.cfg = cfg;
        b.h1 = std::move(h1);
        bundle->doc.tuning = tuning->result;
    });
}

void hs_tuning_free(hs_tuning* tuning) { delete tuning; }

hs_status hs_simulate(const hs_corpus* corpus, const hs_bundle* bundle, const char* participant,
                      hs_policy policy, uint64_t seed, const char* trajectory_csv,
                      double* total_reward) {
    return guarded([&] {
        require(corpus, "corpus");
        require(bundle, "bundle");
        require(participant, "participant");
        const Corpus& c = corpus->corpus;
        const CalibrationBundle& b = bundle->doc.bundle;
        const auto& users = c.participants();
        const auto it = std::find(users.begin(), users.end(), participant);
        if (it == users.end())
            throw InvalidArgument(std::string("participant '") + participant + "' not in corpus");
        const auto index = static_cast<std::size_t>(it - users.begin());
        const ParticipantEnv env = make_env(c.participant_rows(index), b.population, b.features(),
                                            b.cfg, extension_seed(seed, index));
        const auto inputs = make_inputs(b, b.cfg.gamma, b.cfg.w);
        Trajectory traj;
        if (policy == HS_POLICY_BANDIT) {
            ThompsonBandit bandit = make_bandit(b);
            traj = run_episode(env, bandit, inputs->cfg, seed);
        } else if (policy == HS_POLICY_PROPOSED) {
            HeartStepsAlgorithm algo(inputs);
            traj = run_episode(env, algo, inputs->cfg, seed);
        } else {
            throw InvalidArgument("unknown policy");
        }
        if (trajectory_csv) write_trajectory_file(traj, b.cfg.slots_per_day, trajectory_csv);
        if (total_reward) *total_reward = traj.total_reward;
    });
}

hs_status hs_evaluate(const hs_corpus* corpus, const hs_config* cfg,
                      const hs_evaluate_options* opts, uint64_t seed, const char* out_dir,
                      hs_evaluate_summary* summary) {
    return guarded([&] {
        require(corpus, "corpus");
        require(cfg, "config");
        require(out_dir, "out_dir");
        const hs_evaluate_options o = opts ? *opts : hs_evaluate_options{};
        CvOptions cv;
        if (o.folds > 0) cv.folds = o.folds;
        if (o.reps > 0) cv.reps = o.reps;
        cv.tuning_reps = o.tuning_reps > 0 ? o.tuning_reps : cv.reps;
        cv.gammas = grid_or(o.grid.gammas, o.grid.n_gammas, kDefaultGammaGrid);
        cv.ws = grid_or(o.grid.ws, o.grid.n_ws, kDefaultWGrid);
        cv.null_comparison = o.null_comparison != 0;
        cv.keep_trajectories = o.write_trajectories != 0;
        cv.jobs = o.jobs;
        const CvReport report = cross_validate(corpus->corpus, cfg->algo, cv, seed);

        const fs::path dir(out_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        {
            std::ofstream out(dir / "report.csv", std::ios::binary);
            if (!out) throw IoError("cannot write " + (dir / "report.csv").string());
            write_cv_csv(report, out);
        }
        write_json_file(cv_summary_to_json(report), dir / "summary.json");
        if (cv.keep_trajectories) {
            const fs::path tdir = dir / "trajectories";
            fs::create_directories(tdir, ec);
            if (ec) throw IoError("cannot create " + tdir.string() + ": " + ec.message());
            for (const auto& p : report.participants) {
                const std::string base = safe_name(p.user_id);
                write_trajectory_file(p.proposed_log, cfg->algo.slots_per_day,
                                      tdir / (base + "_proposed.csv"));
                write_trajectory_file(p.comparator_log, cfg->algo.slots_per_day,
                                      tdir / (base + "_comparator.csv"));
            }
        }
        if (summary) {
            std::size_t improved = 0;
            for (const auto& p : report.participants) improved += p.improvement_mean > 0.0;
            *summary = {report.participants.size(), improved, report.mean_improvement,
                        report.p_value};
        }
    });
}

hs_status hs_sha256_file(const char* path, char out[65]) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(std::string("cannot open ") + path);
        std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                     EVP_MD_CTX_free);
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
            throw Error("sha256 initialization failed");
        char buf[1 << 16];
        while (in) {
            in.read(buf, sizeof buf);
            if (in.gcount() > 0 &&
                EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount())) != 1)
                throw Error("sha256 update failed");
        }
        if (in.bad()) throw IoError(std::string("read failed: ") + path);
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256 final failed");
        for (unsigned int i = 0; i < len; ++i) std::snprintf(out + 2 * i, 3, "%02x", md[i]);
        out[2 * len] = '\0';
    });
}

void hs_string_free(char* s) { delete[] s; }

}  // extern "C"
