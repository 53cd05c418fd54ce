// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/bsde_solver.hpp"
#include "jumphjb/coefficients.hpp"
#include "jumphjb/fields.hpp"
#include "jumphjb/forward_sim.hpp"

#include <functional>
#include <vector>

namespace jumphjb {

/// Node values on a uniform box grid (n <= 2 in the solver, any n here).
/// Off-node values are multilinear; outside the box they follow the boundary
/// rule (order 1: linear extrapolation, order 0: clamp) within a collar, and
/// further out throw DomainTooSmall. Derivatives are central differences
/// with the grid spacing, so at nodes they are the usual stencils.
class GridField final : public ScalarField {
public:
    GridField() = default;
    /// Spacing is the largest value <= dx that divides each side evenly.
    GridField(Vec lower, Vec upper, double dx, int extrapolation_order = 1, Vec collar = {});

    Eigen::Index dim() const { return lower_.size(); }
    std::size_t size() const { return values_.size(); }
    const std::vector<std::size_t>& counts() const { return counts_; }
    const Vec& lower() const { return lower_; }
    const Vec& upper() const { return upper_; }
    const Vec& spacing() const { return h_; }
    const Vec& collar() const { return collar_; }
    int extrapolation_order() const { return order_; }

    Vec node(std::size_t flat) const;
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool in_box(const Vec& x) const;
    bool in_extended_box(const Vec& x) const;
    double at(const Vec& x) const;

    double value(double, const Vec& x) const override { return at(x); }
    Vec gradient(double, const Vec& x) const override;
    Mat hessian(double, const Vec& x) const override;

private:
    Vec lower_, upper_, h_, collar_;
    std::vector<std::size_t> counts_;
    int order_ = 1;
    std::vector<double> values_;
};

struct PdeOptions {
    Vec lower, upper;
    double dx = 1.0 / 64.0;
    std::size_t time_steps = 0;  // internal steps over the horizon; 0: cfl_fraction of the stability bound
    double cfl_fraction = 0.25;  // stable up to 1, but the time error near the bound is large
    int extrapolation_order = 1;
    double collar = 0.0;  // 0: a quarter of each side
    double min_ellipticity = 1e-12;
};

struct PdeSolution {
    TimeGrid grid;                  // output nodes
    std::vector<GridField> fields;  // V at every output node
    std::size_t substeps = 1;       // internal steps per output step
    double dt = 0.0;                // internal step
    double dt_bound = 0.0;          // stability bound
    double ellipticity = 0.0;       // min eigenvalue of sigma sigma^T over box, controls, times

    double value(const Vec& x) const { return fields.front().at(x); }
};

/// Explicit backward scheme V(t - dt) = V(t) + dt * min_u drift(t, V(t)),
/// with drift_F at each node (Z = K = 0, exact atom sums).
/// dt <= dx^2 / (n max|sigma sigma^T| + dx^2 (nu(E) + max|b| / dx)).
/// Throws StepTooLarge when `time_steps` breaks the bound, InvalidInstance
/// when sigma sigma^T is not uniformly elliptic, DomainTooSmall when a
/// displaced point leaves the collar. Coefficients are read with an empty
/// noise history.
PdeSolution solve_pde(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                      const PdeOptions& options, const std::function<double(const Vec&)>& terminal);

/// Stability bound of the explicit scheme on `field`'s grid at the given times.
double pde_step_bound(const CoefficientSet& cs, const MarkMeasure& mm, const GridField& field,
                      const std::vector<double>& times, double* ellipticity = nullptr);

struct JumpSplit {
    double low = 0.0;   // atoms with rho < 1
    double high = 0.0;  // atoms with rho >= 1
    double total() const { return low + high; }
};

/// sum_e |V(x+g) - V(x) - <DV(x), g>| nu(e), split by the atoms' intensity tag.
JumpSplit jump_term_split(const ScalarField& field, const CoefficientSet& cs, const MarkMeasure& mm, double t,
                          const Vec& x, const Vec& u);

/// max over grid nodes and controls of jump_term_split(...).total() * w_p(x).
double fit_cv(const GridField& field, const CoefficientSet& cs, const MarkMeasure& mm, double t,
              const Vec& inner_lower, const Vec& inner_upper);

/// (Y, Z, K) induced by a solved field along a bundle on the same grid:
/// Y = V(t, X), Z = sigma^T DV(t, X), K(e) = V(t, X + g) - V(t, X).
BsdeSolution evaluate_field_along_path(const PdeSolution& pde, const PathBundle& bundle, const CoefficientSet& cs,
                                       const MarkMeasure& mm);

/// Feedback policy u(t, x) = argmin of the drift on the solved field.
Policy pde_policy(const PdeSolution& pde, const CoefficientSet& cs, const MarkMeasure& mm);

struct ComparisonReport {
    double shift = 0.0;
    double relax = 0.0;
    double min_gap = 0.0;  // min over nodes and times of V - W
    bool dominated = false;
};

/// Subsolution check: W solves the scheme with terminal h - shift and
/// generator f(.., y + shift, ..) - relax (so V - shift is a classical
/// subsolution of that problem). Reports whether V >= W at every node.
ComparisonReport comparison_check(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                                  const PdeOptions& options, const std::function<double(const Vec&)>& terminal,
                                  const PdeSolution& solved, double shift, double relax);

}  // namespace jumphjb
