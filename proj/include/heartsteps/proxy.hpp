#pragma once

#include "heartsteps/core.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace heartsteps {

/// Sorted dosage support points spanning [0, 1/(1 - lambda)].
class DosageGrid {
public:
    DosageGrid() = default;
    /// Validates: first point 0, strictly increasing.
    explicit DosageGrid(std::vector<double> points);
    static DosageGrid uniform(int size, double lambda);

    std::size_t size() const { return points_.size(); }
    double operator[](std::size_t i) const { return points_[i]; }
    std::span<const double> points() const { return points_; }
    double upper() const { return points_.back(); }

    /// x = (1 - weight) * points[lower] + weight * points[lower + 1].
    struct Bracket {
        std::size_t lower = 0;
        double weight = 0.0;
    };
    /// Throws InvalidArgument when x lies outside the grid (beyond a 1e-9 slack).
    Bracket locate(double x) const;

    bool operator==(const DosageGrid&) const = default;

private:
    std::vector<double> points_;
};

struct GridMass {
    std::size_t index = 0;
    double mass = 0.0;
};

/// Next-dosage distribution from grid point `x_index` under `action`:
/// a = 1 moves to lambda x + 1; a = 0 moves there with probability p_sed and
/// to lambda x otherwise. Off-grid targets are split linearly between their
/// bracketing points.
std::vector<GridMass> dosage_transition(std::size_t x_index, int action, double lambda,
                                        double p_sed, const DosageGrid& grid);

/// dosage_transition precomputed for every grid point and both actions.
class DosageKernel {
public:
    DosageKernel() = default;
    DosageKernel(DosageGrid grid, double lambda, double p_sed);

    const DosageGrid& grid() const { return grid_; }
    double lambda() const { return lambda_; }
    double p_sed() const { return p_sed_; }

    std::span<const GridMass> row(std::size_t x, int action) const;
    /// sum_x' tau(x' | x, a) values[x'].
    double expect(std::size_t x, int action, std::span<const double> values) const;

private:
    DosageGrid grid_;
    double lambda_ = 0.95;
    double p_sed_ = 0.2;
    // rows for action a at grid point x live in entries_[offsets_[2x + a] .. offsets_[2x + a + 1])
    std::vector<GridMass> entries_;
    std::vector<std::size_t> offsets_;
};

/// Table indexed by (grid point, bit): bit is availability for V, action for H.
using DosageTable = std::vector<std::array<double, 2>>;

/// Context-marginalized mean rewards. r1 is indexed [x][a]; r0 is the
/// unavailable-time reward.
struct MarginalRewards {
    std::vector<double> r0;
    DosageTable r1;
};

/// Mean of the non-dosage parts of f and g over a context sample (the dosage
/// entries are held at zero). Marginal rewards are linear in these means.
struct ContextMoments {
    Eigen::VectorXd f_mean;
    Eigen::VectorXd g_mean;
    std::size_t count = 0;
};

/// Incremental sum for ContextMoments.
class ContextMomentsAccumulator {
public:
    ContextMomentsAccumulator();
    void add(const RawContext& raw, const FeatureMap& features);
    ContextMoments moments() const;
    std::size_t count() const { return count_; }

private:
    Eigen::VectorXd f_sum_;
    Eigen::VectorXd g_sum_;
    std::size_t count_ = 0;
};

/// Regression coefficients plugged into the proxy MDP's reward.
struct RewardCoefficients {
    Eigen::VectorXd alpha_avail;    // g coefficients at available times
    Eigen::VectorXd beta;           // f coefficients of the treatment effect
    Eigen::VectorXd alpha_unavail;  // g coefficients at unavailable times
};

/// r1(x, a) = mean_z g(z, x)' alpha_avail + a mean_z f(z, x)' beta and
/// r0(x) = mean_z g(z, x)' alpha_unavail, rebuilding features per sampled z.
MarginalRewards marginal_rewards(std::span<const RawContext> sample,
                                 const RewardCoefficients& coef, const DosageGrid& grid,
                                 const FeatureMap& features);

/// Same quantity from precomputed context means.
MarginalRewards marginal_rewards(const ContextMoments& moments, const RewardCoefficients& coef,
                                 const DosageGrid& grid, double lambda);

struct ValueSolution {
    DosageTable V;  // [x][i], i = availability
    double residual = 0.0;  // sup-norm Bellman residual of V
    int iterations = 0;
    std::vector<double> step_norms;  // sup |V_k+1 - V_k| per sweep, when recorded
};

struct ValueIterationOptions {
    double tol = 1e-8;
    int max_iter = 100000;
    bool record_steps = false;
    const DosageTable* warm_start = nullptr;
};

/// Value iteration for the dosage/availability MDP:
///   V(x, 1) = max_a { r1(x, a) + gamma E[V(x', i') | x, a] }
///   V(x, 0) = r0(x) + gamma E[V(x', i') | x, 0]
/// with i' ~ Bernoulli(p_avail). Throws ConvergenceError after max_iter sweeps.
ValueSolution solve_value(const MarginalRewards& rewards, const DosageKernel& kernel,
                          double p_avail, double gamma, const ValueIterationOptions& opts = {});

/// Warm-start state carried between policy-iteration solves.
struct PolicyIterationState {
    std::vector<int> policy;  // action at available times, per grid point
};

/// Same fixed point by policy iteration: each availability-time policy is
/// evaluated with a banded linear solve, then improved greedily until it is
/// stable. Value-iteration sweeps finish the job if the residual is still
/// above opts.tol. An empty state starts from the never-treat policy.
ValueSolution solve_value_policy_iteration(const MarginalRewards& rewards,
                                           const DosageKernel& kernel, double p_avail,
                                           double gamma, PolicyIterationState& state,
                                           const ValueIterationOptions& opts = {});

/// Sup-norm of T(V) - V for the Bellman operator above.
double bellman_residual(const DosageTable& V, const MarginalRewards& rewards,
                        const DosageKernel& kernel, double p_avail, double gamma);

/// H(x, a) = sum_{x', i'} tau(x' | x, a) p^i' (1 - p)^(1 - i') V(x', i').
DosageTable compute_H(const DosageTable& V, const DosageKernel& kernel, double p_avail);

/// Future-value tables on a grid: the output of one proxy-MDP solve.
struct FutureValue {
    DosageGrid grid;
    DosageTable V;
    DosageTable H;
    double p_avail = 0.0;
};

/// Convenience: marginal rewards -> V -> H.
FutureValue solve_future_value(const MarginalRewards& rewards, const DosageKernel& kernel,
                               double p_avail, double gamma,
                               const ValueIterationOptions& opts = {});

/// Blended future value and the delayed-effect proxy used at selection time.
struct ProxyTables {
    DosageGrid grid;
    DosageTable V;
    DosageTable H;
    std::vector<double> eta;  // eta[x] = gamma (H[x][0] - H[x][1])
    double gamma = 0.0;
    double w = 0.0;
    double p_avail = 0.0;
};

/// H = (1 - w) H1 + w H*, eta = gamma (H(., 0) - H(., 1)).
ProxyTables blend_and_eta(const FutureValue& h_star, const FutureValue& h1, double w,
                          double gamma);
/// The w = 0 case, where H* is not needed.
ProxyTables initial_tables(const FutureValue& h1, double gamma);

/// Linear interpolation of eta at dosage x.
double eta_lookup(const ProxyTables& tables, double x);

/// Tables with eta identically zero (the contextual-bandit special case).
ProxyTables zero_tables(const DosageGrid& grid);

}  // namespace heartsteps
