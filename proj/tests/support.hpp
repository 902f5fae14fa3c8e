#pragma once

// Test helpers and independent reference implementations.

#include "heartsteps/calibration.hpp"
#include "heartsteps/core.hpp"
#include "heartsteps/corpus.hpp"
#include "heartsteps/proxy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace testing {

using namespace heartsteps;

inline Standardizer unit_scaler() {
    std::array<Standardizer::Range, kNumRawFeatures> r;
    r.fill({0.0, 1.0});
    return Standardizer(r);
}

inline Standardizer nominal_scaler() { return Standardizer(CorpusSpec{}.nominal_ranges); }

inline RawContext random_raw(std::mt19937_64& rng, const Standardizer& s = nominal_scaler()) {
    RawContext raw;
    for (std::size_t i = 0; i < kNumRawFeatures; ++i) {
        const auto& r = s.range(static_cast<RawFeature>(i));
        raw.values[i] = std::uniform_real_distribution<double>(r.min, r.max)(rng);
    }
    return raw;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> z(0.0, scale);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
    return v;
}

// SPD matrix A A^T / n + eps I.
inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n, double eps = 0.1) {
    Eigen::MatrixXd a(n, n);
    std::normal_distribution<double> z(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = z(rng);
    return a * a.transpose() / static_cast<double>(n) + eps * Eigen::MatrixXd::Identity(n, n);
}

inline GaussianBelief random_belief(std::mt19937_64& rng, Eigen::Index n) {
    return {random_vector(rng, n), random_spd(rng, n)};
}

inline GaussianBelief diag_belief(Eigen::Index n, double mean, double var) {
    return {Eigen::VectorXd::Constant(n, mean), var * Eigen::MatrixXd::Identity(n, n)};
}

// Posterior by the regularized normal equations, solved with a generic
// full-pivot LU rather than a Cholesky factorization.
inline GaussianBelief normal_equations_posterior(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                 const GaussianBelief& prior, double sigma2) {
    const Eigen::MatrixXd prior_prec = prior.cov.fullPivLu().inverse();
    const Eigen::MatrixXd prec = X.transpose() * X / sigma2 + prior_prec;
    const Eigen::MatrixXd cov = prec.fullPivLu().inverse();
    const Eigen::VectorXd rhs = X.transpose() * y / sigma2 + prior_prec * prior.mean;
    return {prec.fullPivLu().solve(rhs), cov};
}

// Standard normal upper tail.
inline double upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Dense transition matrix of one action on a uniform grid, computed directly
// from the interpolation weights of lambda x + 1 and lambda x.
inline Eigen::MatrixXd dense_transition(const std::vector<double>& pts, int action, double lambda,
                                        double p_sed) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    auto put = [&](Eigen::Index row, double target, double mass) {
        for (Eigen::Index k = 0; k + 1 < n; ++k) {
            if (target >= pts[k] - 1e-12 && target <= pts[k + 1] + 1e-12) {
                double w = (target - pts[k]) / (pts[k + 1] - pts[k]);
                w = std::clamp(w, 0.0, 1.0);
                P(row, k) += (1.0 - w) * mass;
                P(row, k + 1) += w * mass;
                return;
            }
        }
        throw std::runtime_error("target off grid");
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = pts[i];
        if (action == 1) {
            put(i, lambda * x + 1.0, 1.0);
        } else {
            put(i, lambda * x + 1.0, p_sed);
            put(i, lambda * x, 1.0 - p_sed);
        }
    }
    return P;
}

// Optimal V by enumerating every stationary availability-time policy
// (2^n of them), evaluating each exactly with a dense solve over the 2n
// states (x, i), and taking the state-wise maximum.
inline DosageTable enumerate_optimal_V(const MarginalRewards& r, const std::vector<double>& pts,
                                       double lambda, double p_sed, double p_avail, double gamma) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    const Eigen::MatrixXd P0 = dense_transition(pts, 0, lambda, p_sed);
    const Eigen::MatrixXd P1 = dense_transition(pts, 1, lambda, p_sed);
    DosageTable best(pts.size(), {-1e300, -1e300});
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        // State index: x for i = 0, n + x for i = 1.
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        Eigen::VectorXd c(2 * n);
        for (Eigen::Index x = 0; x < n; ++x) {
            for (int i = 0; i < 2; ++i) {
                const int a = i == 1 ? static_cast<int>((mask >> x) & 1u) : 0;
                const Eigen::MatrixXd& P = a == 1 ? P1 : P0;
                const Eigen::Index s = i * n + x;
                c[s] = i == 1 ? r.r1[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)]
                              : r.r0[static_cast<std::size_t>(x)];
                for (Eigen::Index y = 0; y < n; ++y) {
                    T(s, y) += (1.0 - p_avail) * P(x, y);
                    T(s, n + y) += p_avail * P(x, y);
                }
            }
        }
        const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2 * n, 2 * n) - gamma * T;
        const Eigen::VectorXd v = A.fullPivLu().solve(c);
        for (Eigen::Index x = 0; x < n; ++x) {
            auto& b = best[static_cast<std::size_t>(x)];
            b[0] = std::max(b[0], v[x]);
            b[1] = std::max(b[1], v[n + x]);
        }
    }
    return best;
}

inline MarginalRewards random_rewards(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    MarginalRewards r;
    r.r0.resize(n);
    r.r1.resize(n);
    for (std::size_t x = 0; x < n; ++x) {
        r.r0[x] = u(rng);
        r.r1[x] = {u(rng), u(rng)};
    }
    return r;
}

inline double max_abs_diff(const DosageTable& a, const DosageTable& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < 2; ++k) m = std::max(m, std::abs(a[i][k] - b[i][k]));
    return m;
}

// Small complete corpus with a known linear reward model.
inline Corpus small_corpus(std::uint64_t seed, int participants = 6, int days = 42) {
    CorpusSpec spec;
    spec.participants = participants;
    spec.days = days;
    return generate_corpus(spec, seed);
}

// Calibration of small_corpus(1), computed once per process.
inline const CalibrationBundle& shared_bundle() {
    static const CalibrationBundle b = calibrate(small_corpus(1), AlgoConfig{});
    return b;
}

}  // namespace testing
