// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/coefficients.hpp"
#include "jumphjb/forward_sim.hpp"
#include "jumphjb/integro_pde.hpp"
#include "jumphjb/regression.hpp"

#include <functional>
#include <vector>

namespace jumphjb {

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

struct MollifierSpec {
    int level = 1;          // l >= 1
    Eigen::Index dim = 1;   // n
    int order = 16;         // Gauss-Legendre points per axis
};

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

/// int rho_l(x - y) func(y) dy with rho(z) = c exp(1 / (|z|^2 - 1)) on the
/// unit ball; c is fixed by the same tensor quadrature so the discrete mass
/// is exactly one (cached per dimension and order).
double mollify(const std::function<double(const Vec&)>& func, const MollifierSpec& spec, const Vec& x);
Vec mollify_vec(const std::function<Vec(const Vec&)>& func, const MollifierSpec& spec, const Vec& x);
Mat mollify_mat(const std::function<Mat(const Vec&)>& func, const MollifierSpec& spec, const Vec& x);

/// (b, sigma, g, f, h) convolved with rho_l in x; the weight l is unchanged.
CoefficientSet mollify_coefficients(const CoefficientSet& cs, const MollifierSpec& spec);

struct CoefficientErrors {
    double delta_h = 0.0;             // sup |h_l - h| w_p
    std::vector<double> delta_f;      // per time: sup |f_l - f| w_p over x, u, sampled (y, z, k)
    std::vector<double> delta_lambda; // per time: sup |b_l - b| + |sigma_l - sigma| + |g_l - g|_{L2(nu)}
};

CoefficientErrors coefficient_errors(const CoefficientSet& cs, const MarkMeasure& mm, const MollifierSpec& spec,
                                     const std::vector<Vec>& probe, const std::vector<double>& times);

/// Largest |F(x) - F(y)| / |x - y| over the given pairs.
double empirical_lipschitz(const std::function<double(const Vec&)>& func,
                           const std::vector<std::pair<Vec, Vec>>& pairs);

// ---------------------------------------------------------------------------
// Bounding BSDE with deterministic drivers
// ---------------------------------------------------------------------------

struct BoundingInputs {
    double delta_h = 0.0;
    std::vector<double> delta_f;       // at grid nodes
    std::vector<double> delta_lambda;  // at grid nodes
    double c_v = 0.0;
    double l_y = 0.0;
    double c_phi = 0.0;
};

/// dY/ds = -(delta_f + C_V delta_lambda + (L_y + C_phi) Y), Y(T) = delta_h,
/// by the backward trapezoid rule; Y at every node.
std::vector<double> bounding_bsde(const BoundingInputs& in, const TimeGrid& grid);

struct EnvelopeIdentity {
    double ode = 0.0;           // max |discrete -dY/ds - trapezoid drift|
    double cancellation = 0.0;  // max |supersolution drift identity| over nodes and probe weights
};

/// Recomputes the upper envelope's drift: the envelope's own drift
/// (delta_f + C_V dl + (L_y + C_phi) Y + L_z|Z| + L_k|K|) w^{-1} against the three
/// lower bounds it must absorb; with Z = K = 0 both residuals are rounding only.
EnvelopeIdentity envelope_identity(const BoundingInputs& in, const std::vector<double>& y, const TimeGrid& grid,
                                   const std::vector<double>& inverse_weights);

// ---------------------------------------------------------------------------
// Penalty and Lyapunov function
// ---------------------------------------------------------------------------

struct PenaltyValue {
    double value = 0.0;
    Vec gradient;
    Mat hessian;
    double hessian_min_eig = 0.0;
    double lower_bound = 0.0;  // (p + 2)(1 + |x - c|^2)^{p/2}
    bool bound_holds = false;
};

/// chi(x - c) = (1 + |x - c|^2)^{(p+2)/2} - 1 with analytic derivatives.
PenaltyValue penalty_chi(const Vec& x, const Vec& center, double p);

struct PenaltyDomination {
    Vec argmax;
    double max_value = 0.0;
    bool interior = false;  // argmax not on the probe box boundary
};

/// Maximizes field(x) - eps chi(x - c) over a lattice on [lower, upper].
PenaltyDomination penalty_domination(const std::function<double(const Vec&)>& field, const Vec& center, double p,
                                     double eps, const Vec& lower, const Vec& upper, std::size_t points);

/// phi(x) = 1 + |x|^p with analytic gradient and Hessian.
FunctionField lyapunov_phi(double p);

struct LyapunovReport {
    double c_phi = 0.0;      // max over probes of L^u phi / phi
    Vec argmax;
    double c_weighted = 0.0; // max of (|Dphi| + (1 + |x|) |D^2 phi| + L^u phi) / phi
    std::size_t nonfinite = 0;
    std::size_t probes = 0;
};

LyapunovReport lyapunov_check(const CoefficientSet& cs, const MarkMeasure& mm, double p,
                              const std::vector<Vec>& probe, double t = 0.0);

/// Lattice with `points` per axis on [lower, upper].
std::vector<Vec> lattice(const Vec& lower, const Vec& upper, std::size_t points);

// ---------------------------------------------------------------------------
// Envelope sandwich
// ---------------------------------------------------------------------------

/// Largest |f(y) - f(y')| / |y - y'| over probe states, controls and a fixed
/// set of (y, z, k) samples.
double generator_lipschitz_y(const CoefficientSet& cs, const std::vector<Vec>& probe,
                             const std::vector<double>& times);

/// Weighted sensitivity of the drift to coefficient errors on a solved field:
/// max over inner-box nodes and controls of
/// w_p (|DV| (1 + sqrt(nu(E))) + s (1 + |x|) |D^2V| + |DV(x + g)|_{L2(nu)}),
/// with s = max |sigma| / (1 + |x|) over the same nodes.
double operator_constant(const GridField& V, const CoefficientSet& cs, const MarkMeasure& mm, double t,
                         const Vec& inner_lower, const Vec& inner_upper);

struct SandwichLevel {
    int level = 0;
    CoefficientErrors errors;
    double y0 = 0.0;            // bounding Y at t0
    double width = 0.0;         // max over inner nodes of 2 Y(t0) / w_p(x)
    std::size_t violations = 0; // nodes (all times) where V_l leaves [V - Y/w, V + Y/w]
    double min_slack = 0.0;     // min over nodes of Y/w - |V_l - V|
};

struct SandwichReport {
    double c_v = 0.0;
    double l_y = 0.0;
    double c_phi = 0.0;
    std::vector<SandwichLevel> levels;
};

/// Solves the PDE with the original and with mollified coefficients at each
/// level on the same grids, and checks V_l inside V -+ Y^l w_p^{-1}.
SandwichReport envelope_sandwich(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                                 const PdeOptions& options, const std::vector<int>& levels, int order,
                                 const Vec& inner_lower, const Vec& inner_upper, std::size_t probe_points = 41);

// ---------------------------------------------------------------------------
// Finite-dimensional noise projection
// ---------------------------------------------------------------------------

/// Per path: Brownian increments over N time intervals and jump counts per
/// (interval, atom group).
class NoiseProjection {
public:
    NoiseProjection(std::vector<std::size_t> interval_nodes, std::vector<std::vector<std::size_t>> groups,
                    std::size_t n_paths, Eigen::Index d);

    std::size_t intervals() const { return nodes_.size() - 1; }
    std::size_t group_count() const { return groups_.size(); }
    std::size_t n_paths() const { return n_paths_; }
    Eigen::Index d() const { return d_; }
    const std::vector<std::size_t>& interval_nodes() const { return nodes_; }
    const std::vector<std::vector<std::size_t>>& groups() const { return groups_; }

    double& brownian(std::size_t path, std::size_t interval, Eigen::Index j);
    double brownian(std::size_t path, std::size_t interval, Eigen::Index j) const;
    int& count(std::size_t path, std::size_t interval, std::size_t group);
    int count(std::size_t path, std::size_t interval, std::size_t group) const;

    /// [increments..., counts...] of one path.
    Vec features(std::size_t path) const;
    bool operator==(const NoiseProjection& o) const;

private:
    std::vector<std::size_t> nodes_;
    std::vector<std::vector<std::size_t>> groups_;
    std::size_t n_paths_;
    Eigen::Index d_;
    std::vector<double> brownian_;
    std::vector<int> counts_;
};

/// N intervals with grid-node boundaries (rounded uniform), M contiguous
/// atom groups of near-equal size (M capped at the atom count).
NoiseProjection project_noise(const PathBundle& bundle, std::size_t n_intervals, std::size_t n_groups);

/// Root-mean-square least-squares residual of `target` (one value per path)
/// on polynomials of total degree `degree` in each projection's features.
std::vector<double> projection_error(const Vec& target, const std::vector<NoiseProjection>& projections,
                                     int degree = 2);

/// Multilinear interpolation of a lattice function at a real point (the
/// cylinder-map smoothing; equals psi on the lattice).
double lattice_interpolate(const std::function<double(const std::vector<int>&)>& psi, const Vec& point);

}  // namespace jumphjb
