#include "heartsteps/calibration.hpp"

#include "heartsteps/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace heartsteps {

namespace {

bool contains(std::span<const std::string> list, std::string_view name) {
    return std::find(list.begin(), list.end(), name) != list.end();
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
    return out;
}

// Column-pivoted QR; throws RankDeficient listing the columns beyond the rank.
Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const Eigen::MatrixXd& X,
                                                      const std::vector<std::string>& columns) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (X.rows() < X.cols() || qr.rank() < X.cols()) {
        std::vector<std::string> bad;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < X.cols(); ++k)
            bad.push_back(columns.at(static_cast<std::size_t>(perm(k))));
        throw RankDeficient("design matrix is rank deficient; collinear columns: " + join(bad),
                            bad);
    }
    return qr;
}

double sample_sd(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (n - 1.0));
}

}  // namespace

PooledFit pooled_fit(const RegressionData& data) {
    const Eigen::Index n = data.X.rows();
    const Eigen::Index k = data.X.cols();
    if (data.y.size() != n || data.cluster.size() != static_cast<std::size_t>(n))
        throw InvalidArgument("regression inputs have inconsistent lengths");
    if (data.columns.size() != static_cast<std::size_t>(k))
        throw InvalidArgument("column names do not match the design");
    if (data.cluster_ids.size() < 2) throw InvalidArgument("pooled fit needs at least two participants");
    if (n <= k) throw InvalidArgument("pooled fit needs more rows than columns");

    const auto qr = checked_qr(data.X, data.columns);
    PooledFit fit;
    fit.columns = data.columns;
    fit.coef = qr.solve(data.y);
    const Eigen::VectorXd resid = data.y - data.X * fit.coef;
    fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - k);
    fit.n_obs = static_cast<std::size_t>(n);
    fit.n_clusters = data.cluster_ids.size();

    const Eigen::MatrixXd xtx = data.X.transpose() * data.X;
    const Eigen::MatrixXd bread = xtx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    std::vector<Eigen::VectorXd> score(data.cluster_ids.size(), Eigen::VectorXd::Zero(k));
    for (Eigen::Index i = 0; i < n; ++i)
        score[static_cast<std::size_t>(data.cluster[static_cast<std::size_t>(i)])] +=
            data.X.row(i).transpose() * resid(i);
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& s : score) meat.noalias() += s * s.transpose();
    const Eigen::MatrixXd vcov = bread * meat * bread;

    fit.robust_se.resize(k);
    fit.p_values.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double se = std::sqrt(std::max(0.0, vcov(j, j)));
        fit.robust_se(j) = se;
        if (se == 0.0) {
            fit.p_values(j) = fit.coef(j) == 0.0 ? 1.0 : 0.0;
        } else {
            fit.p_values(j) = std::erfc(std::abs(fit.coef(j) / se) / std::sqrt(2.0));
        }
    }
    return fit;
}

RegressionData build_design(const Corpus& corpus, RewardModel model, const FeatureMap& features,
                            std::span<const std::string> uncollected) {
    std::vector<int> g_cols, f_cols;
    RegressionData data;
    for (int j = 0; j < kDimG; ++j) {
        if (contains(uncollected, kGNames[static_cast<std::size_t>(j)])) continue;
        g_cols.push_back(j);
        data.columns.push_back("g:" + std::string(kGNames[static_cast<std::size_t>(j)]));
    }
    if (model == RewardModel::Available) {
        for (int j = 0; j < kDimF; ++j) {
            if (contains(uncollected, kFNames[static_cast<std::size_t>(j)])) continue;
            f_cols.push_back(j);
            data.columns.push_back("f:" + std::string(kFNames[static_cast<std::size_t>(j)]));
        }
    }
    const bool want_available = model == RewardModel::Available;
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> y;
    for (std::size_t u = 0; u < corpus.participants().size(); ++u) {
        const auto prow = corpus.participant_rows(u);
        const auto dosage = reconstruct_dosage(prow, features.lambda());
        bool used = false;
        for (std::size_t i = 0; i < prow.size(); ++i) {
            if (prow[i].available != want_available) continue;
            const FeaturePair x = features(prow[i].raw, dosage[i]);
            Eigen::VectorXd row(static_cast<Eigen::Index>(g_cols.size() + f_cols.size()));
            Eigen::Index c = 0;
            for (int j : g_cols) row(c++) = x.g(j);
            for (int j : f_cols) row(c++) = prow[i].action * x.f(j);
            rows.push_back(std::move(row));
            y.push_back(prow[i].reward);
            if (!used) {
                data.cluster_ids.push_back(corpus.participants()[u]);
                used = true;
            }
            data.cluster.push_back(static_cast<int>(data.cluster_ids.size()) - 1);
        }
    }
    data.X.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(data.columns.size()));
    data.y.resize(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        data.X.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        data.y(static_cast<Eigen::Index>(i)) = y[i];
    }
    return data;
}

PersonFits person_fits(const RegressionData& data) {
    PersonFits out;
    const Eigen::Index k = data.X.cols();
    for (std::size_t c = 0; c < data.cluster_ids.size(); ++c) {
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < data.cluster.size(); ++i)
            if (data.cluster[i] == static_cast<int>(c)) idx.push_back(static_cast<Eigen::Index>(i));
        Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), k);
        Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) {
            X.row(static_cast<Eigen::Index>(r)) = data.X.row(idx[r]);
            y(static_cast<Eigen::Index>(r)) = data.y(idx[r]);
        }
        try {
            const auto qr = checked_qr(X, data.columns);
            out.users.push_back(data.cluster_ids[c]);
            out.coefs.push_back(qr.solve(y));
        } catch (const RankDeficient&) {
            out.skipped.push_back(data.cluster_ids[c]);
        }
    }
    return out;
}

PriorTable build_prior(const PooledFit& pooled, const PersonFits& persons, double alpha_level) {
    if (persons.coefs.size() < 2)
        throw InvalidArgument("prior construction needs at least two person-level fits");
    const Eigen::Index k = pooled.coef.size();
    PriorTable out;
    out.columns = pooled.columns;
    out.mean.resize(k);
    out.sd.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        std::vector<double> v;
        v.reserve(persons.coefs.size());
        for (const auto& c : persons.coefs) {
            if (c.size() != k) throw InvalidArgument("person fit does not match the pooled layout");
            v.push_back(c(j));
        }
        const double sd = sample_sd(v);
        if (pooled.p_values(j) < alpha_level) {
            out.mean(j) = pooled.coef(j);
            out.sd(j) = sd;
        } else {
            out.mean(j) = 0.0;
            out.sd(j) = 0.5 * sd;
        }
    }
    return out;
}

GaussianBelief block_prior(const PriorTable& table, std::string_view block) {
    const bool is_g = block == "g";
    if (!is_g && block != "f") throw InvalidArgument("block must be \"g\" or \"f\"");
    const std::size_t dim = is_g ? kDimG : kDimF;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    Eigen::VectorXd sd = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), -1.0);
    double sd_sum = 0.0;
    int found = 0;
    for (std::size_t j = 0; j < dim; ++j) {
        const std::string name =
            std::string(block) + ":" + std::string(is_g ? kGNames[j] : kFNames[j]);
        const auto it = std::find(table.columns.begin(), table.columns.end(), name);
        if (it == table.columns.end()) continue;
        const auto c = static_cast<Eigen::Index>(it - table.columns.begin());
        mean(static_cast<Eigen::Index>(j)) = table.mean(c);
        sd(static_cast<Eigen::Index>(j)) = table.sd(c);
        sd_sum += table.sd(c);
        ++found;
    }
    if (found == 0) throw InvalidArgument("prior table has no column in block " + std::string(block));
    const double fill = sd_sum / found;
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (sd(j) < 0.0) sd(j) = fill;
    return {mean, sd.array().square().matrix().asDiagonal()};
}

Eigen::VectorXd block_coefficients(const PooledFit& fit, std::string_view block) {
    const bool is_g = block == "g";
    if (!is_g && block != "f") throw InvalidArgument("block must be \"g\" or \"f\"");
    const std::size_t dim = is_g ? kDimG : kDimF;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
        const std::string name =
            std::string(block) + ":" + std::string(is_g ? kGNames[j] : kFNames[j]);
        const auto it = std::find(fit.columns.begin(), fit.columns.end(), name);
        if (it != fit.columns.end())
            out(static_cast<Eigen::Index>(j)) = fit.coef(it - fit.columns.begin());
    }
    return out;
}

CalibrationBundle calibrate(const Corpus& corpus, const AlgoConfig& cfg,
                            const CalibrationOptions& opts) {
    cfg.validate();
    if (corpus.participants().size() < 2)
        throw InvalidArgument("calibration needs at least two participants");
    CalibrationBundle b;
    b.cfg = cfg;
    const auto contexts = corpus.contexts();
    b.scaler = Standardizer::fit(contexts);
    const FeatureMap fm = b.features();

    const RegressionData avail = build_design(corpus, RewardModel::Available, fm, opts.uncollected);
    const RegressionData unavail =
        build_design(corpus, RewardModel::Unavailable, fm, opts.uncollected);
    b.fit_available = pooled_fit(avail);
    b.fit_unavailable = pooled_fit(unavail);

    const PersonFits persons_avail = person_fits(avail);
    const PersonFits persons_unavail = person_fits(unavail);
    b.skipped_participants = persons_avail.skipped;
    for (const auto& s : persons_unavail.skipped)
        if (!contains(b.skipped_participants, s)) b.skipped_participants.push_back(s);

    const PriorTable prior_avail = build_prior(b.fit_available, persons_avail, opts.alpha_level);
    const PriorTable prior_unavail =
        build_prior(b.fit_unavailable, persons_unavail, opts.alpha_level);
    b.prior_alpha0 = block_prior(prior_avail, "g");
    b.prior_beta = block_prior(prior_avail, "f");
    b.prior_unavail = block_prior(prior_unavail, "g");

    b.sigma2 = b.fit_available.residual_variance;
    b.cfg.sigma2 = b.sigma2;

    std::size_t n_avail = 0;
    ContextMomentsAccumulator moments;
    for (const auto& r : corpus.rows()) {
        n_avail += r.available ? 1 : 0;
        moments.add(r.raw, fm);
    }
    b.p_avail = static_cast<double>(n_avail) / static_cast<double>(corpus.size());
    b.context_moments = moments.moments();
    b.population.alpha_avail = block_coefficients(b.fit_available, "g");
    b.population.beta = block_coefficients(b.fit_available, "f");
    b.population.alpha_unavail = block_coefficients(b.fit_unavailable, "g");
    b.n_participants = corpus.participants().size();
    b.n_rows = corpus.size();
    b.h1 = initial_H(b, cfg.gamma);
    return b;
}

FutureValue initial_H(const CalibrationBundle& bundle, double gamma) {
    const AlgoConfig& cfg = bundle.cfg;
    const DosageGrid grid = DosageGrid::uniform(cfg.dosage_grid_size, cfg.lambda);
    const DosageKernel kernel(grid, cfg.lambda, cfg.p_sed);
    const MarginalRewards rewards =
        marginal_rewards(bundle.context_moments, bundle.population, grid, cfg.lambda);
    return solve_future_value(rewards, kernel, bundle.p_avail, gamma);
}

FutureValue initial_H(const Corpus& corpus, const RewardCoefficients& coef,
                      const FeatureMap& features, const AlgoConfig& cfg) {
    cfg.validate();
    if (corpus.size() == 0) throw InvalidArgument("corpus is empty");
    const DosageGrid grid = DosageGrid::uniform(cfg.dosage_grid_size, cfg.lambda);
    const DosageKernel kernel(grid, cfg.lambda, cfg.p_sed);
    std::size_t n_avail = 0;
    for (const auto& r : corpus.rows()) n_avail += r.available ? 1 : 0;
    const auto contexts = corpus.contexts();
    const MarginalRewards rewards = marginal_rewards(contexts, coef, grid, features);
    return solve_future_value(rewards, kernel,
                              static_cast<double>(n_avail) / static_cast<double>(corpus.size()),
                              cfg.gamma);
}

}  // namespace heartsteps
