#include "heartsteps/proxy.hpp"

#include "heartsteps/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace heartsteps {

namespace {

constexpr double kGridSlack = 1e-9;

void check_p_avail(double p_avail) {
    if (!(p_avail >= 0.0 && p_avail <= 1.0))
        throw InvalidArgument("p_avail must lie in [0, 1]");
}

void check_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
}

void add_mass(std::vector<GridMass>& out, const DosageGrid& grid, double target, double mass) {
    if (mass == 0.0) return;
    const DosageGrid::Bracket b = grid.locate(target);
    auto push = [&](std::size_t idx, double m) {
        if (m == 0.0) return;
        for (auto& e : out) {
            if (e.index == idx) {
                e.mass += m;
                return;
            }
        }
        out.push_back({idx, m});
    };
    push(b.lower, mass * (1.0 - b.weight));
    if (b.weight > 0.0) push(b.lower + 1, mass * b.weight);
}

// One Bellman sweep. `W` holds p V(x, 1) + (1 - p) V(x, 0).
void bellman_sweep(const DosageTable& V, DosageTable& out, std::vector<double>& W,
                   const MarginalRewards& rewards, const DosageKernel& kernel, double p_avail,
                   double gamma) {
    const std::size_t n = V.size();
    for (std::size_t x = 0; x < n; ++x) W[x] = p_avail * V[x][1] + (1.0 - p_avail) * V[x][0];
    for (std::size_t x = 0; x < n; ++x) {
        const double h0 = kernel.expect(x, 0, W);
        const double h1 = kernel.expect(x, 1, W);
        out[x][0] = rewards.r0[x] + gamma * h0;
        out[x][1] = std::max(rewards.r1[x][0] + gamma * h0, rewards.r1[x][1] + gamma * h1);
    }
}

// In-place Gaussian elimination on a row-major band matrix (kl sub- and ku
// super-diagonals) without pivoting; callers pass strictly diagonally
// dominant systems, for which this is stable.
void solve_banded(std::vector<double>& band, std::size_t n, std::size_t kl, std::size_t ku,
                  std::vector<double>& rhs) {
    const std::size_t width = kl + ku + 1;
    auto at = [&](std::size_t i, std::size_t j) -> double& { return band[i * width + j + kl - i]; };
    for (std::size_t k = 0; k < n; ++k) {
        const double pivot = at(k, k);
        if (!(std::abs(pivot) > 0.0)) throw NumericalError("singular policy-evaluation system");
        const std::size_t last_row = std::min(n - 1, k + kl);
        const std::size_t last_col = std::min(n - 1, k + ku);
        for (std::size_t i = k + 1; i <= last_row; ++i) {
            const double l = at(i, k) / pivot;
            if (l == 0.0) continue;
            for (std::size_t j = k + 1; j <= last_col; ++j) at(i, j) -= l * at(k, j);
            rhs[i] -= l * rhs[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double acc = rhs[k];
        const std::size_t last_col = std::min(n - 1, k + ku);
        for (std::size_t j = k + 1; j <= last_col; ++j) acc -= at(k, j) * rhs[j];
        rhs[k] = acc / at(k, k);
    }
    for (double v : rhs)
        if (!std::isfinite(v)) throw NumericalError("policy evaluation diverged");
}

double sup_diff(const DosageTable& a, const DosageTable& b) {
    double d = 0.0;
    for (std::size_t x = 0; x < a.size(); ++x) {
        d = std::max(d, std::abs(a[x][0] - b[x][0]));
        d = std::max(d, std::abs(a[x][1] - b[x][1]));
    }
    return d;
}

void check_rewards(const MarginalRewards& rewards, const DosageKernel& kernel) {
    const std::size_t n = kernel.grid().size();
    if (rewards.r0.size() != n || rewards.r1.size() != n)
        throw InvalidArgument("marginal rewards do not match the dosage grid");
}

}  // namespace

DosageGrid::DosageGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw InvalidArgument("dosage grid needs at least two points");
    if (points_.front() != 0.0) throw InvalidArgument("dosage grid must start at 0");
    for (std::size_t i = 1; i < points_.size(); ++i) {
        if (!(points_[i] > points_[i - 1]))
            throw InvalidArgument("dosage grid must be strictly increasing");
    }
}

DosageGrid DosageGrid::uniform(int size, double lambda) {
    if (size < 2) throw InvalidArgument("dosage grid needs at least two points");
    if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in (0, 1)");
    const double cap = 1.0 / (1.0 - lambda);
    std::vector<double> pts(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) pts[static_cast<std::size_t>(i)] = cap * i / (size - 1);
    pts.back() = cap;
    return DosageGrid(std::move(pts));
}

DosageGrid::Bracket DosageGrid::locate(double x) const {
    const double lo = points_.front();
    const double hi = points_.back();
    if (!(x >= lo - kGridSlack && x <= hi + kGridSlack))
        throw InvalidArgument("dosage " + std::to_string(x) + " outside grid range [0, " +
                              std::to_string(hi) + "]");
    x = std::clamp(x, lo, hi);
    const auto it = std::upper_bound(points_.begin(), points_.end(), x);
    if (it == points_.end()) return {points_.size() - 2, 1.0};
    const std::size_t upper = static_cast<std::size_t>(it - points_.begin());
    const std::size_t lower = upper - 1;
    const double weight = (x - points_[lower]) / (points_[upper] - points_[lower]);
    return {lower, weight};
}

std::vector<GridMass> dosage_transition(std::size_t x_index, int action, double lambda,
                                        double p_sed, const DosageGrid& grid) {
    if (x_index >= grid.size()) throw InvalidArgument("grid index out of range");
    if (action != 0 && action != 1) throw InvalidArgument("action must be 0 or 1");
    if (!(p_sed >= 0.0 && p_sed <= 1.0)) throw InvalidArgument("p_sed must lie in [0, 1]");
    const double x = grid[x_index];
    std::vector<GridMass> out;
    out.reserve(4);
    if (action == 1) {
        add_mass(out, grid, lambda * x + 1.0, 1.0);
    } else {
        add_mass(out, grid, lambda * x + 1.0, p_sed);
        add_mass(out, grid, lambda * x, 1.0 - p_sed);
    }
    return out;
}

DosageKernel::DosageKernel(DosageGrid grid, double lambda, double p_sed)
    : grid_(std::move(grid)), lambda_(lambda), p_sed_(p_sed) {
    offsets_.reserve(2 * grid_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t x = 0; x < grid_.size(); ++x) {
        for (int a = 0; a < 2; ++a) {
            const auto row = dosage_transition(x, a, lambda, p_sed, grid_);
            entries_.insert(entries_.end(), row.begin(), row.end());
            offsets_.push_back(entries_.size());
        }
    }
}

std::span<const GridMass> DosageKernel::row(std::size_t x, int action) const {
    const std::size_t k = 2 * x + static_cast<std::size_t>(action);
    return {entries_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

double DosageKernel::expect(std::size_t x, int action, std::span<const double> values) const {
    const std::size_t k = 2 * x + static_cast<std::size_t>(action);
    double acc = 0.0;
    for (std::size_t e = offsets_[k]; e < offsets_[k + 1]; ++e)
        acc += entries_[e].mass * values[entries_[e].index];
    return acc;
}

ContextMomentsAccumulator::ContextMomentsAccumulator()
    : f_sum_(Eigen::VectorXd::Zero(kDimF)), g_sum_(Eigen::VectorXd::Zero(kDimG)) {}

void ContextMomentsAccumulator::add(const RawContext& raw, const FeatureMap& features) {
    const FeaturePair pair = features(raw, 0.0);
    f_sum_ += pair.f;
    g_sum_ += pair.g;
    ++count_;
}

ContextMoments ContextMomentsAccumulator::moments() const {
    if (count_ == 0) throw InvalidArgument("context sample is empty");
    const double n = static_cast<double>(count_);
    return {f_sum_ / n, g_sum_ / n, count_};
}

MarginalRewards marginal_rewards(std::span<const RawContext> sample,
                                 const RewardCoefficients& coef, const DosageGrid& grid,
                                 const FeatureMap& features) {
    if (sample.empty()) throw InvalidArgument("context sample is empty");
    MarginalRewards out;
    out.r0.assign(grid.size(), 0.0);
    out.r1.assign(grid.size(), {0.0, 0.0});
    const double n = static_cast<double>(sample.size());
    for (std::size_t x = 0; x < grid.size(); ++x) {
        double avail = 0.0;
        double effect = 0.0;
        double unavail = 0.0;
        for (const RawContext& z : sample) {
            const FeaturePair pair = features(z, grid[x]);
            avail += pair.g.dot(coef.alpha_avail);
            effect += pair.f.dot(coef.beta);
            unavail += pair.g.dot(coef.alpha_unavail);
        }
        out.r1[x] = {avail / n, (avail + effect) / n};
        out.r0[x] = unavail / n;
    }
    return out;
}

MarginalRewards marginal_rewards(const ContextMoments& moments, const RewardCoefficients& coef,
                                 const DosageGrid& grid, double lambda) {
    if (moments.count == 0) throw InvalidArgument("context sample is empty");
    if (coef.alpha_avail.size() != kDimG || coef.alpha_unavail.size() != kDimG ||
        coef.beta.size() != kDimF)
        throw InvalidArgument("reward coefficients do not match the feature layout");
    const double scale = 1.0 - lambda;  // dosage standardization 1 / cap
    const double base_avail = moments.g_mean.dot(coef.alpha_avail);
    const double base_effect = moments.f_mean.dot(coef.beta);
    const double base_unavail = moments.g_mean.dot(coef.alpha_unavail);
    MarginalRewards out;
    out.r0.resize(grid.size());
    out.r1.resize(grid.size());
    for (std::size_t x = 0; x < grid.size(); ++x) {
        const double dose = grid[x] * scale;
        const double avail = base_avail + dose * coef.alpha_avail(fidx::kDosage);
        const double effect = base_effect + dose * coef.beta(fidx::kDosage);
        out.r1[x] = {avail, avail + effect};
        out.r0[x] = base_unavail + dose * coef.alpha_unavail(fidx::kDosage);
    }
    return out;
}

ValueSolution solve_value(const MarginalRewards& rewards, const DosageKernel& kernel,
                          double p_avail, double gamma, const ValueIterationOptions& opts) {
    check_rewards(rewards, kernel);
    check_p_avail(p_avail);
    check_gamma(gamma);
    if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
    if (opts.max_iter <= 0) throw InvalidArgument("max_iter must be positive");

    const std::size_t n = kernel.grid().size();
    ValueSolution sol;
    if (opts.warm_start != nullptr && opts.warm_start->size() == n) {
        sol.V = *opts.warm_start;
    } else {
        sol.V.assign(n, {0.0, 0.0});
    }
    DosageTable next(n);
    std::vector<double> W(n);
    double step = 0.0;
    for (int it = 1; it <= opts.max_iter; ++it) {
        bellman_sweep(sol.V, next, W, rewards, kernel, p_avail, gamma);
        step = sup_diff(next, sol.V);
        if (!std::isfinite(step)) throw NumericalError("value iteration diverged");
        sol.V.swap(next);
        sol.iterations = it;
        if (opts.record_steps) sol.step_norms.push_back(step);
        if (step < opts.tol) {
            // The residual of the returned iterate is one more sweep away.
            bellman_sweep(sol.V, next, W, rewards, kernel, p_avail, gamma);
            sol.residual = sup_diff(next, sol.V);
            if (sol.residual < opts.tol) return sol;
        }
    }
    throw ConvergenceError("value iteration did not converge within " +
                               std::to_string(opts.max_iter) + " sweeps (residual " +
                               std::to_string(step) + ")",
                           step);
}

ValueSolution solve_value_policy_iteration(const MarginalRewards& rewards,
                                           const DosageKernel& kernel, double p_avail,
                                           double gamma, PolicyIterationState& state,
                                           const ValueIterationOptions& opts) {
    check_rewards(rewards, kernel);
    check_p_avail(p_avail);
    check_gamma(gamma);
    if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
    const std::size_t n = kernel.grid().size();
    std::vector<int>& policy = state.policy;
    if (policy.size() != n) policy.assign(n, 0);

    // The system matrix is banded: transitions from x land near lambda x and
    // lambda x + 1, within a fixed index distance of x.
    std::ptrdiff_t kl = 0, ku = 0;
    for (std::size_t x = 0; x < n; ++x) {
        for (int a = 0; a < 2; ++a) {
            for (const auto& m : kernel.row(x, a)) {
                const auto d = static_cast<std::ptrdiff_t>(m.index) - static_cast<std::ptrdiff_t>(x);
                kl = std::max(kl, -d);
                ku = std::max(ku, d);
            }
        }
    }
    // Row-major band storage: entry (i, j) at band[i * width + (j - i + kl)].
    const auto width = static_cast<std::size_t>(kl + ku + 1);
    std::vector<double> band(width * n);
    std::vector<double> W(n);
    auto at = [&](std::size_t i, std::size_t j) -> double& {
        return band[i * width + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) -
                                                          static_cast<std::ptrdiff_t>(i) + kl)];
    };

    ValueSolution sol;
    sol.V.resize(n);
    const int max_rounds = 1000;
    for (int round = 0; round < max_rounds; ++round) {
        // W = p (r1(x, a(x)) + gamma K_a W) + (1 - p) (r0 + gamma K_0 W)
        std::fill(band.begin(), band.end(), 0.0);
        for (std::size_t x = 0; x < n; ++x) {
            at(x, x) += 1.0;
            for (const auto& m : kernel.row(x, policy[x])) at(x, m.index) -= gamma * p_avail * m.mass;
            for (const auto& m : kernel.row(x, 0)) at(x, m.index) -= gamma * (1.0 - p_avail) * m.mass;
            W[x] = p_avail * rewards.r1[x][static_cast<std::size_t>(policy[x])] +
                   (1.0 - p_avail) * rewards.r0[x];
        }
        solve_banded(band, n, static_cast<std::size_t>(kl), static_cast<std::size_t>(ku), W);

        bool stable = true;
        const std::span<const double> w(W);
        for (std::size_t x = 0; x < n; ++x) {
            const double h0 = kernel.expect(x, 0, w);
            const double h1 = kernel.expect(x, 1, w);
            const double q0 = rewards.r1[x][0] + gamma * h0;
            const double q1 = rewards.r1[x][1] + gamma * h1;
            sol.V[x][0] = rewards.r0[x] + gamma * h0;
            sol.V[x][1] = std::max(q0, q1);
            // Switch only on a clear improvement so ties cannot cycle.
            const double margin = 1e-12 * (1.0 + std::abs(q0) + std::abs(q1));
            const int best = policy[x] == 0 ? (q1 > q0 + margin ? 1 : 0)
                                            : (q0 > q1 + margin ? 0 : 1);
            if (best != policy[x]) {
                policy[x] = best;
                stable = false;
            }
        }
        sol.iterations = round + 1;
        if (stable) break;
    }
    sol.residual = bellman_residual(sol.V, rewards, kernel, p_avail, gamma);
    if (sol.residual < opts.tol) return sol;

    ValueIterationOptions vi = opts;
    const DosageTable start = sol.V;
    vi.warm_start = &start;
    ValueSolution polished = solve_value(rewards, kernel, p_avail, gamma, vi);
    polished.iterations += sol.iterations;
    return polished;
}

double bellman_residual(const DosageTable& V, const MarginalRewards& rewards,
                        const DosageKernel& kernel, double p_avail, double gamma) {
    check_rewards(rewards, kernel);
    DosageTable next(V.size());
    std::vector<double> W(V.size());
    bellman_sweep(V, next, W, rewards, kernel, p_avail, gamma);
    return sup_diff(next, V);
}

DosageTable compute_H(const DosageTable& V, const DosageKernel& kernel, double p_avail) {
    check_p_avail(p_avail);
    const std::size_t n = kernel.grid().size();
    if (V.size() != n) throw InvalidArgument("value table does not match the dosage grid");
    std::vector<double> W(n);
    for (std::size_t x = 0; x < n; ++x) W[x] = p_avail * V[x][1] + (1.0 - p_avail) * V[x][0];
    DosageTable H(n);
    for (std::size_t x = 0; x < n; ++x) H[x] = {kernel.expect(x, 0, W), kernel.expect(x, 1, W)};
    return H;
}

FutureValue solve_future_value(const MarginalRewards& rewards, const DosageKernel& kernel,
                               double p_avail, double gamma, const ValueIterationOptions& opts) {
    ValueSolution sol = solve_value(rewards, kernel, p_avail, gamma, opts);
    FutureValue out;
    out.grid = kernel.grid();
    out.H = compute_H(sol.V, kernel, p_avail);
    out.V = std::move(sol.V);
    out.p_avail = p_avail;
    return out;
}

ProxyTables blend_and_eta(const FutureValue& h_star, const FutureValue& h1, double w,
                          double gamma) {
    if (!(h_star.grid == h1.grid)) throw InvalidArgument("future-value tables use different grids");
    if (h_star.H.size() != h1.H.size() || h1.H.size() != h1.grid.size())
        throw InvalidArgument("future-value tables do not match their grid");
    if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("w must lie in [0, 1]");
    check_gamma(gamma);
    ProxyTables out;
    out.grid = h1.grid;
    out.V = h_star.V;
    out.gamma = gamma;
    out.w = w;
    out.p_avail = h_star.p_avail;
    const std::size_t n = h1.H.size();
    out.H.resize(n);
    out.eta.resize(n);
    for (std::size_t x = 0; x < n; ++x) {
        for (int a = 0; a < 2; ++a)
            out.H[x][a] = (1.0 - w) * h1.H[x][a] + w * h_star.H[x][a];
        out.eta[x] = gamma * out.H[x][0] - gamma * out.H[x][1];
    }
    return out;
}

ProxyTables initial_tables(const FutureValue& h1, double gamma) {
    check_gamma(gamma);
    if (h1.H.size() != h1.grid.size()) throw InvalidArgument("future value does not match its grid");
    ProxyTables out;
    out.grid = h1.grid;
    out.V = h1.V;
    out.H = h1.H;
    out.gamma = gamma;
    out.w = 0.0;
    out.p_avail = h1.p_avail;
    out.eta.resize(h1.H.size());
    for (std::size_t x = 0; x < h1.H.size(); ++x)
        out.eta[x] = gamma * out.H[x][0] - gamma * out.H[x][1];
    return out;
}

double eta_lookup(const ProxyTables& tables, double x) {
    if (tables.eta.size() != tables.grid.size())
        throw InvalidArgument("eta table does not match its grid");
    const DosageGrid::Bracket b = tables.grid.locate(x);
    if (b.weight == 0.0) return tables.eta[b.lower];
    return (1.0 - b.weight) * tables.eta[b.lower] + b.weight * tables.eta[b.lower + 1];
}

ProxyTables zero_tables(const DosageGrid& grid) {
    ProxyTables out;
    out.grid = grid;
    out.V.assign(grid.size(), {0.0, 0.0});
    out.H.assign(grid.size(), {0.0, 0.0});
    out.eta.assign(grid.size(), 0.0);
    return out;
}

}  // namespace heartsteps
