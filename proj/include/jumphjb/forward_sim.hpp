// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/coefficients.hpp"
#include "jumphjb/mark_measure.hpp"
#include "jumphjb/rng.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace jumphjb {

/// Uniform time grid t0 = s_0 < ... < s_steps = T.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t0, double T, std::size_t steps);

    double t0() const { return t0_; }
    double T() const { return T_; }
    std::size_t steps() const { return steps_; }
    double dt() const { return (T_ - t0_) / static_cast<double>(steps_); }
    double node(std::size_t i) const { return i == steps_ ? T_ : t0_ + static_cast<double>(i) * dt(); }
    std::vector<double> nodes() const;

    /// Sub-grid on nodes [first, last] of this grid.
    TimeGrid segment(std::size_t first, std::size_t last) const;

    /// Index of the step containing time t in (s_i, s_{i+1}].
    std::size_t step_of(double t) const;

private:
    double t0_ = 0.0;
    double T_ = 1.0;
    std::size_t steps_ = 1;
};

/// Feedback control: (t, X(t), noise history) -> control point.
using Policy = std::function<Vec(double t, const Vec& x, const NoiseHistory& hist)>;

Policy constant_policy(Vec u);

/// A batch of trajectories sharing one grid. Arrays are flat and row-major
/// in (path, node/step, component).
class PathBundle {
public:
    PathBundle() = default;
    PathBundle(TimeGrid grid, std::size_t n_paths, Eigen::Index n, Eigen::Index d, Eigen::Index k,
               std::size_t atoms);

    const TimeGrid& grid() const { return grid_; }
    std::size_t n_paths() const { return n_paths_; }
    Eigen::Index n() const { return n_; }
    Eigen::Index d() const { return d_; }
    Eigen::Index k() const { return k_; }
    std::size_t atoms() const { return atoms_; }

    Eigen::Map<const Vec> state(std::size_t path, std::size_t node) const;
    Eigen::Map<Vec> state(std::size_t path, std::size_t node);
    Eigen::Map<const Vec> brownian(std::size_t path, std::size_t step) const;
    Eigen::Map<Vec> brownian(std::size_t path, std::size_t step);
    Eigen::Map<const Vec> control(std::size_t path, std::size_t step) const;
    Eigen::Map<Vec> control(std::size_t path, std::size_t step);

    const std::vector<JumpRecord>& jumps(std::size_t path) const { return jumps_[path]; }
    std::vector<JumpRecord>& jumps(std::size_t path) { return jumps_[path]; }

    /// Number of jumps of the given atom inside step `step` of `path`.
    int jump_count(std::size_t path, std::size_t step, std::size_t atom) const;
    /// All per-atom counts for one step (size atoms()).
    void jump_counts(std::size_t path, std::size_t step, std::vector<int>& out) const;

    /// Noise history at node `node`: W(s_node) and counts of jumps with time <= s_node.
    void history_at(std::size_t path, std::size_t node, NoiseHistory& out) const;

    const std::vector<double>& raw_states() const { return states_; }

private:
    TimeGrid grid_;
    std::size_t n_paths_ = 0;
    Eigen::Index n_ = 0, d_ = 0, k_ = 0;
    std::size_t atoms_ = 0;
    std::vector<double> states_;
    std::vector<double> brownian_;
    std::vector<double> controls_;
    std::vector<std::vector<JumpRecord>> jumps_;
};

/// Euler scheme with exact jump sampling:
/// X_{i+1} = X_i + b dt + sigma dW + sum_{jumps in step} g(t_j, e_j, X_i, u_i) - dt * sum_e w_e g(t_i, e, X_i, u_i).
/// `initial` holds either one state (broadcast) or one per path. Path p uses
/// stream seeds.stream(p), so bundles are reproducible and independent of
/// the worker count. Throws ErrorCode::BlowUp on a nonfinite state.
PathBundle simulate(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                    const std::vector<Vec>& initial, const Policy& policy, std::size_t n_paths,
                    const SeedSequence& seeds);

/// Re-runs the Euler recursion of one path from `from_node` using the stored
/// noise, overwriting states and controls after that node.
void integrate_path(const CoefficientSet& cs, const MarkMeasure& mm, const Policy& policy, PathBundle& bundle,
                    std::size_t path, std::size_t from_node);

/// Restarts every path at (s_split, X(s_split)) with the identical noise
/// segments and returns max |X_restarted - X_original| over paths and nodes.
double flow_check(const CoefficientSet& cs, const MarkMeasure& mm, const Policy& policy, const PathBundle& bundle,
                  std::size_t split_node);

double flow_check(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                  const Policy& policy, std::size_t split_node, std::size_t n_paths, const SeedSequence& seeds);

struct MomentReport {
    std::vector<double> exponents;
    std::vector<double> sup_moment;     // E sup_s |X(s)|^q
    std::vector<double> sup_moment_se;
    std::vector<double> lags;           // |s - t| values of the increment table
    std::vector<std::vector<double>> increment_moment;  // [q][lag] E|X(s) - X(t)|^q
    std::vector<double> increment_slope;  // least-squares log-log slope per q
};

MomentReport moment_report(const PathBundle& bundle, const std::vector<double>& exponents);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace jumphjb
