// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/coefficients.hpp"
#include "jumphjb/forward_sim.hpp"
#include "jumphjb/regression.hpp"

#include <functional>
#include <vector>

namespace jumphjb {

struct BsdeOptions {
    RegressionBasis basis;
    bool picard = false;  // one fixed-point sweep with Y_i inside f
    /// Fit Z and K on even paths and apply to odd ones (and vice versa), so
    /// no path's Z_i or K_i depends on its own increments.
    bool cross_fit = true;
};

/// Discrete (Y, Z, K) along a bundle. Flat storage, path-major.
class BsdeSolution {
public:
    BsdeSolution() = default;
    BsdeSolution(std::size_t n_paths, std::size_t steps, Eigen::Index d, std::size_t atoms);

    std::size_t n_paths() const { return n_paths_; }
    std::size_t steps() const { return steps_; }
    Eigen::Index d() const { return d_; }
    std::size_t atoms() const { return atoms_; }

    double& y(std::size_t path, std::size_t node) { return y_[path * (steps_ + 1) + node]; }
    double y(std::size_t path, std::size_t node) const { return y_[path * (steps_ + 1) + node]; }
    Eigen::Map<Vec> z(std::size_t path, std::size_t step) {
        return {z_.data() + (path * steps_ + step) * static_cast<std::size_t>(d_), d_};
    }
    Eigen::Map<const Vec> z(std::size_t path, std::size_t step) const {
        return {z_.data() + (path * steps_ + step) * static_cast<std::size_t>(d_), d_};
    }
    double& k(std::size_t path, std::size_t step, std::size_t atom) {
        return k_[(path * steps_ + step) * atoms_ + atom];
    }
    double k(std::size_t path, std::size_t step, std::size_t atom) const {
        return k_[(path * steps_ + step) * atoms_ + atom];
    }
    /// quadrature(K * l) as passed to the generator.
    double& k_agg(std::size_t path, std::size_t step) { return k_agg_[path * steps_ + step]; }
    double k_agg(std::size_t path, std::size_t step) const { return k_agg_[path * steps_ + step]; }
    double& terminal(std::size_t path) { return terminal_[path]; }
    double terminal(std::size_t path) const { return terminal_[path]; }

    /// Mean of Y at node 0, and the standard error of the pathwise cost
    /// h(X_T) + sum_i f_i dt as its Monte Carlo error.
    double y0 = 0.0;
    double y0_se = 0.0;
    /// Regression representations: Y at every node, Z and K per step.
    std::vector<RegressionFunction> y_fn;
    std::vector<std::vector<RegressionFunction>> z_fn;  // [step][component]
    std::vector<std::vector<RegressionFunction>> k_fn;  // [step][atom], empty for weightless atoms
    bool picard = false;
    /// Whether Y came from the regression scheme (its residual mean is then
    /// pinned by the fit, see martingale_residuals).
    bool regression_pinned = true;

private:
    std::size_t n_paths_ = 0, steps_ = 0, atoms_ = 0;
    Eigen::Index d_ = 0;
    std::vector<double> y_, z_, k_, k_agg_, terminal_;
};

/// Terminal value override: (path index, X(T)) -> Y(T).
using TerminalOverride = std::function<double(std::size_t path, const Vec& x)>;

/// Backward regression scheme for
///   -dY = f(s, X, u, Y, Z, sum_e K l nu) ds - Z dW - int K dmu~.
/// Z_i = E[Y_{i+1} dW_i | X_i] / dt, K_i(e) = E[Y_{i+1}(N_i(e) - w_e dt) | X_i] / (w_e dt),
/// Y_i = E[Y_{i+1} + f(.., Y_{i+1}, Z_i, k_agg) dt | X_i].
/// Z and K targets use Y_{i+1} minus its fitted conditional mean, which has
/// the same expectation and far less variance.
BsdeSolution solve(const CoefficientSet& cs, const MarkMeasure& mm, const PathBundle& bundle,
                   const BsdeOptions& options, const TerminalOverride& terminal = {});

struct CostEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// simulate + solve; the cost from deterministic initial data is the mean of Y(0).
CostEstimate recursive_cost(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                            const Policy& policy, const BsdeOptions& options, std::size_t n_paths,
                            const SeedSequence& seeds);

/// G_{t,gamma}[eta]: the BSDE on `segment` with Y(gamma) = terminal_field(X(gamma)).
CostEstimate backward_semigroup(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& segment,
                                const Vec& x0, const Policy& policy,
                                const std::function<double(const Vec&)>& terminal_field,
                                const BsdeOptions& options, std::size_t n_paths, const SeedSequence& seeds);

/// Per-step mean and standard error of
/// Y_{i+1} - Y_i + f dt - Z_i dW_i - sum_e K_i(e)(N_i(e) - w_e dt)
/// on the bundle the solution was computed from. The Y fit pins the mean of
/// Y_{i+1} - Y_i + f dt to zero, so the residual mean is minus the mean of the
/// martingale increment and `se` is that increment's standard error. Without
/// cross-fitting, Z_i dW_i carries an O(dt |Z|^2) in-sample bias. For a
/// triple not produced by the regression (e.g. a PDE field along paths) `se`
/// is the plain standard error of the residual.
struct ResidualTable {
    std::vector<double> mean;
    std::vector<double> se;
};
ResidualTable martingale_residuals(const CoefficientSet& cs, const MarkMeasure& mm, const PathBundle& bundle,
                                   const BsdeSolution& sol);

struct AprioriReport {
    double y0 = 0.0;
    double envelope_constant = 0.0;  // |Y(0)| / (1 + |x0|^p)
    double y0_doubled = 0.0;         // cost from 2 x0
    double growth_factor = 0.0;      // |Y(0; 2x0)| / |Y(0; x0)|
    double growth_bound = 0.0;       // fitted C * (1 + |2x0|^p) / (1 + |x0|^p) with C >= 1
    double y0_perturbed = 0.0;       // cost from x0 + delta
    double stability_constant = 0.0; // |dJ| / ((1 + |x|^{p-1} + |x'|^{p-1}) |x - x'|)
    double sup_second_moment = 0.0;  // max_i mean Y_i^2 along the base run
};

AprioriReport apriori_report(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                             const Policy& policy, const BsdeOptions& options, std::size_t n_paths,
                             const SeedSequence& seeds, double perturbation = 1e-2);

}  // namespace jumphjb
