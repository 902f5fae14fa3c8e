#include "heartsteps/serialization.hpp"

#include "heartsteps/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace heartsteps {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, std::string_view what) {
    if (!j.is_object()) throw ParseError(std::string(what) + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key))
            throw ParseError("unknown key '" + key + "' in " + std::string(what));
    }
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad value for '") + key + "': " + e.what());
    }
}

template <typename T>
T read_req(const Json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("missing key '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad value for '") + key + "': " + e.what());
    }
}

Json vec(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd to_vec(const Json& j, const char* key) {
    const auto v = read_req<std::vector<double>>(j, key);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <std::size_t N>
Json names(const std::array<std::string_view, N>& a) {
    Json out = Json::array();
    for (auto n : a) out.push_back(std::string(n));
    return out;
}

Json table(const DosageTable& t) {
    Json out = Json::array();
    for (const auto& row : t) out.push_back({row[0], row[1]});
    return out;
}

DosageTable to_table(const Json& j, const char* key) {
    const auto rows = read_req<std::vector<std::vector<double>>>(j, key);
    DosageTable t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != 2) throw ParseError(std::string(key) + " rows must have two entries");
        t[i] = {rows[i][0], rows[i][1]};
    }
    return t;
}

// Priors are diagonal: stored as mean and sd per feature.
Json diag_prior(const GaussianBelief& b, const Json& features) {
    Eigen::VectorXd sd(b.dim());
    for (Eigen::Index i = 0; i < b.dim(); ++i) {
        for (Eigen::Index k = 0; k < b.dim(); ++k) {
            if (i != k && b.cov(i, k) != 0.0)
                throw InvalidArgument("prior covariance is not diagonal");
        }
        sd[i] = std::sqrt(b.cov(i, i));
    }
    return {{"features", features}, {"mean", vec(b.mean)}, {"sd", vec(sd)}};
}

GaussianBelief diag_prior_from(const Json& j, std::size_t dim, const char* what) {
    GaussianBelief b;
    b.mean = to_vec(j, "mean");
    const Eigen::VectorXd sd = to_vec(j, "sd");
    if (static_cast<std::size_t>(b.mean.size()) != dim || sd.size() != b.mean.size())
        throw ParseError(std::string(what) + " prior has the wrong dimension");
    if ((sd.array() < 0.0).any() || !sd.allFinite())
        throw ParseError(std::string(what) + " prior sd must be finite and nonnegative");
    b.cov = sd.array().square().matrix().asDiagonal();
    return b;
}

Json fit_to_json(const PooledFit& f) {
    return {{"columns", f.columns},
            {"coef", vec(f.coef)},
            {"robust_se", vec(f.robust_se)},
            {"p_values", vec(f.p_values)},
            {"residual_variance", f.residual_variance},
            {"n_obs", f.n_obs},
            {"n_clusters", f.n_clusters}};
}

PooledFit fit_from_json(const Json& j) {
    PooledFit f;
    f.columns = read_req<std::vector<std::string>>(j, "columns");
    f.coef = to_vec(j, "coef");
    f.robust_se = to_vec(j, "robust_se");
    f.p_values = to_vec(j, "p_values");
    f.residual_variance = read_req<double>(j, "residual_variance");
    f.n_obs = read_req<std::size_t>(j, "n_obs");
    f.n_clusters = read_req<std::size_t>(j, "n_clusters");
    const auto k = static_cast<Eigen::Index>(f.columns.size());
    if (f.coef.size() != k || f.robust_se.size() != k || f.p_values.size() != k)
        throw ParseError("fit arrays do not match its column list");
    return f;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Json config_to_json(const AlgoConfig& c) {
    return {{"lambda", c.lambda},
            {"epsilon0", c.epsilon0},
            {"epsilon1", c.epsilon1},
            {"gamma", c.gamma},
            {"w", c.w},
            {"sigma2", c.sigma2},
            {"p_sed", c.p_sed},
            {"slots_per_day", c.slots_per_day},
            {"n_days", c.n_days},
            {"dosage_grid_size", c.dosage_grid_size}};
}

AlgoConfig config_from_json(const Json& j, AlgoConfig c) {
    reject_unknown(j,
                   {"lambda", "epsilon0", "epsilon1", "gamma", "w", "sigma2", "p_sed",
                    "slots_per_day", "n_days", "dosage_grid_size", "corpus"},
                   "config");
    read_opt(j, "lambda", c.lambda);
    read_opt(j, "epsilon0", c.epsilon0);
    read_opt(j, "epsilon1", c.epsilon1);
    read_opt(j, "gamma", c.gamma);
    read_opt(j, "w", c.w);
    read_opt(j, "sigma2", c.sigma2);
    read_opt(j, "p_sed", c.p_sed);
    read_opt(j, "slots_per_day", c.slots_per_day);
    read_opt(j, "n_days", c.n_days);
    read_opt(j, "dosage_grid_size", c.dosage_grid_size);
    c.validate();
    return c;
}

Json corpus_spec_to_json(const CorpusSpec& s) {
    Json ranges = Json::object();
    for (std::size_t i = 0; i < kNumRawFeatures; ++i)
        ranges[std::string(kRawFeatureNames[i])] = {{"min", s.nominal_ranges[i].min},
                                                    {"max", s.nominal_ranges[i].max}};
    return {{"participants", s.participants},
            {"days", s.days},
            {"slots_per_day", s.slots_per_day},
            {"lambda", s.lambda},
            {"p_available", s.p_available},
            {"p_treat", s.p_treat},
            {"noise_sd", s.noise_sd},
            {"person_sd", s.person_sd},
            {"context_autocorr", s.context_autocorr},
            {"nonlinearity", s.nonlinearity},
            {"alpha_avail", s.alpha_avail},
            {"beta", s.beta},
            {"alpha_unavail", s.alpha_unavail},
            {"nominal_ranges", ranges}};
}

CorpusSpec corpus_spec_from_json(const Json& j, CorpusSpec s) {
    reject_unknown(j,
                   {"participants", "days", "slots_per_day", "lambda", "p_available", "p_treat",
                    "noise_sd", "person_sd", "context_autocorr", "nonlinearity", "alpha_avail",
                    "beta", "alpha_unavail", "nominal_ranges"},
                   "corpus spec");
    read_opt(j, "participants", s.participants);
    read_opt(j, "days", s.days);
    read_opt(j, "slots_per_day", s.slots_per_day);
    read_opt(j, "lambda", s.lambda);
    read_opt(j, "p_available", s.p_available);
    read_opt(j, "p_treat", s.p_treat);
    read_opt(j, "noise_sd", s.noise_sd);
    read_opt(j, "person_sd", s.person_sd);
    read_opt(j, "context_autocorr", s.context_autocorr);
    read_opt(j, "nonlinearity", s.nonlinearity);
    read_opt(j, "alpha_avail", s.alpha_avail);
    read_opt(j, "beta", s.beta);
    read_opt(j, "alpha_unavail", s.alpha_unavail);
    if (j.contains("nominal_ranges")) {
        const Standardizer custom = standardizer_from_json(j.at("nominal_ranges"));
        for (std::size_t i = 0; i < kNumRawFeatures; ++i)
            s.nominal_ranges[i] = custom.range(static_cast<RawFeature>(i));
    }
    s.validate();
    return s;
}

Json standardizer_to_json(const Standardizer& s) {
    Json out = Json::object();
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        const auto& r = s.range(static_cast<RawFeature>(i));
        out[std::string(kRawFeatureNames[i])] = {{"min", r.min}, {"max", r.max}};
    }
    return out;
}

Standardizer standardizer_from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("standardization table must be an object");
    std::map<std::string, Standardizer::Range> named;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_object()) throw ParseError("range for '" + key + "' must be an object");
        reject_unknown(value, {"min", "max"}, "range for '" + key + "'");
        named[key] = {read_req<double>(value, "min"), read_req<double>(value, "max")};
    }
    try {
        return Standardizer::from_named(named);
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what());
    }
}

Json future_value_to_json(const FutureValue& fv, double gamma) {
    return {{"gamma", gamma},
            {"p_avail", fv.p_avail},
            {"grid", std::vector<double>(fv.grid.points().begin(), fv.grid.points().end())},
            {"V", table(fv.V)},
            {"H", table(fv.H)}};
}

FutureValue future_value_from_json(const Json& j) {
    FutureValue fv;
    try {
        fv.grid = DosageGrid(read_req<std::vector<double>>(j, "grid"));
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("bad dosage grid: ") + e.what());
    }
    fv.V = to_table(j, "V");
    fv.H = to_table(j, "H");
    fv.p_avail = read_req<double>(j, "p_avail");
    if (fv.V.size() != fv.grid.size() || fv.H.size() != fv.grid.size())
        throw ParseError("future-value tables do not match the grid");
    return fv;
}

Json proxy_tables_to_json(const ProxyTables& t) {
    return {{"gamma", t.gamma},
            {"w", t.w},
            {"p_avail", t.p_avail},
            {"grid", std::vector<double>(t.grid.points().begin(), t.grid.points().end())},
            {"V", table(t.V)},
            {"H", table(t.H)},
            {"eta", t.eta}};
}

Json tuning_to_json(const TuningResult& t) {
    return {{"gammas", t.gammas},
            {"ws", t.ws},
            {"mean_reward", t.mean_reward},
            {"best_gamma", t.best_gamma},
            {"best_w", t.best_w},
            {"reps", t.reps},
            {"n_envs", t.n_envs}};
}

TuningResult tuning_from_json(const Json& j) {
    TuningResult t;
    t.gammas = read_req<std::vector<double>>(j, "gammas");
    t.ws = read_req<std::vector<double>>(j, "ws");
    t.mean_reward = read_req<std::vector<std::vector<double>>>(j, "mean_reward");
    t.best_gamma = read_req<double>(j, "best_gamma");
    t.best_w = read_req<double>(j, "best_w");
    t.reps = read_req<int>(j, "reps");
    t.n_envs = read_req<std::size_t>(j, "n_envs");
    if (t.mean_reward.size() != t.gammas.size())
        throw ParseError("tuning table does not match the gamma grid");
    for (const auto& row : t.mean_reward)
        if (row.size() != t.ws.size()) throw ParseError("tuning table does not match the w grid");
    return t;
}

Json bundle_to_json(const BundleDocument& doc) {
    const CalibrationBundle& b = doc.bundle;
    Json j;
    j["format"] = "heartsteps-calibration";
    j["format_version"] = kBundleFormatVersion;
    j["config"] = config_to_json(b.cfg);
    j["standardization"] = standardizer_to_json(b.scaler);
    j["sigma2"] = b.sigma2;
    j["p_avail"] = b.p_avail;
    j["n_participants"] = b.n_participants;
    j["n_rows"] = b.n_rows;
    j["skipped_participants"] = b.skipped_participants;
    j["prior"] = {{"alpha0", diag_prior(b.prior_alpha0, names(kGNames))},
                  {"beta", diag_prior(b.prior_beta, names(kFNames))},
                  {"alpha_unavail", diag_prior(b.prior_unavail, names(kGNames))}};
    j["population"] = {{"alpha_avail", vec(b.population.alpha_avail)},
                       {"beta", vec(b.population.beta)},
                       {"alpha_unavail", vec(b.population.alpha_unavail)}};
    j["context_moments"] = {{"f_mean", vec(b.context_moments.f_mean)},
                            {"g_mean", vec(b.context_moments.g_mean)},
                            {"count", b.context_moments.count}};
    j["fits"] = {{"available", fit_to_json(b.fit_available)},
                 {"unavailable", fit_to_json(b.fit_unavailable)}};
    j["h1"] = future_value_to_json(b.h1, b.cfg.gamma);
    if (doc.tuning) j["tuning"] = tuning_to_json(*doc.tuning);
    return j;
}

BundleDocument bundle_from_json(const Json& j) {
    reject_unknown(j,
                   {"format", "format_version", "config", "standardization", "sigma2", "p_avail",
                    "n_participants", "n_rows", "skipped_participants", "prior", "population",
                    "context_moments", "fits", "h1", "tuning"},
                   "calibration bundle");
    if (read_req<std::string>(j, "format") != "heartsteps-calibration")
        throw ParseError("not a calibration bundle");
    if (read_req<int>(j, "format_version") != kBundleFormatVersion)
        throw ParseError("unsupported bundle format version");
    BundleDocument doc;
    CalibrationBundle& b = doc.bundle;
    b.cfg = config_from_json(j.at("config"));
    b.scaler = standardizer_from_json(j.at("standardization"));
    b.sigma2 = read_req<double>(j, "sigma2");
    b.p_avail = read_req<double>(j, "p_avail");
    b.n_participants = read_req<std::size_t>(j, "n_participants");
    b.n_rows = read_req<std::size_t>(j, "n_rows");
    b.skipped_participants = read_req<std::vector<std::string>>(j, "skipped_participants");
    if (!(b.sigma2 > 0.0)) throw ParseError("sigma2 must be positive");
    if (!(b.p_avail >= 0.0 && b.p_avail <= 1.0)) throw ParseError("p_avail must lie in [0, 1]");

    const Json& prior = read_req<Json>(j, "prior");
    b.prior_alpha0 = diag_prior_from(read_req<Json>(prior, "alpha0"), kDimG, "alpha0");
    b.prior_beta = diag_prior_from(read_req<Json>(prior, "beta"), kDimF, "beta");
    b.prior_unavail = diag_prior_from(read_req<Json>(prior, "alpha_unavail"), kDimG,
                                      "alpha_unavail");

    const Json& pop = read_req<Json>(j, "population");
    b.population.alpha_avail = to_vec(pop, "alpha_avail");
    b.population.beta = to_vec(pop, "beta");
    b.population.alpha_unavail = to_vec(pop, "alpha_unavail");
    if (b.population.alpha_avail.size() != kDimG || b.population.beta.size() != kDimF ||
        b.population.alpha_unavail.size() != kDimG)
        throw ParseError("population coefficients have the wrong dimension");

    const Json& cm = read_req<Json>(j, "context_moments");
    b.context_moments.f_mean = to_vec(cm, "f_mean");
    b.context_moments.g_mean = to_vec(cm, "g_mean");
    b.context_moments.count = read_req<std::size_t>(cm, "count");
    if (b.context_moments.f_mean.size() != kDimF || b.context_moments.g_mean.size() != kDimG)
        throw ParseError("context moments have the wrong dimension");

    const Json& fits = read_req<Json>(j, "fits");
    b.fit_available = fit_from_json(read_req<Json>(fits, "available"));
    b.fit_unavailable = fit_from_json(read_req<Json>(fits, "unavailable"));

    const Json& h1 = read_req<Json>(j, "h1");
    b.h1 = future_value_from_json(h1);
    if (read_req<double>(h1, "gamma") != b.cfg.gamma)
        throw ParseError("h1 was solved at a different gamma than the bundle config");
    if (b.h1.grid.size() != static_cast<std::size_t>(b.cfg.dosage_grid_size))
        throw ParseError("h1 grid size differs from the bundle config");
    if (j.contains("tuning")) doc.tuning = tuning_from_json(j.at("tuning"));
    return doc;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

void write_cv_csv(const CvReport& report, std::ostream& out) {
    out << "user_id,fold,proposed_mean,comparator_mean,improvement_mean,improvement_se\n";
    for (const auto& p : report.participants) {
        out << p.user_id << ',' << p.fold << ',' << format_double(p.proposed_mean) << ','
            << format_double(p.comparator_mean) << ',' << format_double(p.improvement_mean) << ','
            << format_double(p.improvement_se) << '\n';
    }
}

Json cv_summary_to_json(const CvReport& report) {
    Json folds = Json::array();
    for (const auto& f : report.folds)
        folds.push_back({{"fold", f.fold},
                         {"train", f.train},
                         {"test", f.test},
                         {"sigma2", f.sigma2},
                         {"tuning", tuning_to_json(f.tuning)}});
    std::size_t improved = 0;
    for (const auto& p : report.participants) improved += p.improvement_mean > 0.0 ? 1 : 0;
    return {{"n_participants", report.participants.size()},
            {"n_improved", improved},
            {"mean_improvement", report.mean_improvement},
            {"p_value_one_sided", report.p_value},
            {"folds", folds}};
}

}  // namespace heartsteps
