// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/integro_pde.hpp"

#include "jumphjb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace jumphjb {

GridField::GridField(Vec lower, Vec upper, double dx, int extrapolation_order, Vec collar)
    : lower_(std::move(lower)), upper_(std::move(upper)), order_(extrapolation_order) {
    const Eigen::Index n = lower_.size();
    if (n == 0 || upper_.size() != n) fail(ErrorCode::InvalidArgument, "grid box bounds have mismatched sizes");
    if (!(dx > 0.0)) fail(ErrorCode::InvalidArgument, "grid spacing must be positive");
    if (order_ != 0 && order_ != 1) fail(ErrorCode::InvalidArgument, "extrapolation order must be 0 or 1");
    h_.resize(n);
    counts_.resize(static_cast<std::size_t>(n));
    std::size_t total = 1;
    for (Eigen::Index a = 0; a < n; ++a) {
        const double w = upper_(a) - lower_(a);
        if (!(w > 0.0)) fail(ErrorCode::InvalidArgument, "grid box must have positive width");
        const auto cells = static_cast<std::size_t>(std::ceil(w / dx - 1e-9));
        counts_[static_cast<std::size_t>(a)] = cells + 1;
        h_(a) = w / static_cast<double>(cells);
        total *= cells + 1;
    }
    if (collar.size() == 0) collar = 0.25 * (upper_ - lower_);
    if (collar.size() != n) fail(ErrorCode::InvalidArgument, "collar has the wrong dimension");
    collar_ = collar.cwiseMax(h_);  // stencils at the boundary reach one spacing out
    values_.assign(total, 0.0);
}

Vec GridField::node(std::size_t flat) const {
    Vec x(dim());
    for (Eigen::Index a = 0; a < dim(); ++a) {
        const std::size_t c = counts_[static_cast<std::size_t>(a)];
        x(a) = lower_(a) + static_cast<double>(flat % c) * h_(a);
        flat /= c;
    }
    return x;
}

bool GridField::in_box(const Vec& x) const {
    for (Eigen::Index a = 0; a < dim(); ++a)
        if (x(a) < lower_(a) - 1e-12 || x(a) > upper_(a) + 1e-12) return false;
    return true;
}

bool GridField::in_extended_box(const Vec& x) const {
    for (Eigen::Index a = 0; a < dim(); ++a)
        if (!(x(a) >= lower_(a) - collar_(a) - 1e-12 && x(a) <= upper_(a) + collar_(a) + 1e-12)) return false;
    return true;
}

double GridField::at(const Vec& x) const {
    const Eigen::Index n = dim();
    if (x.size() != n) fail(ErrorCode::InvalidArgument, "grid field evaluated at a point of the wrong dimension");
    if (!in_extended_box(x)) {
        std::ostringstream os;
        os << "point (";
        for (Eigen::Index a = 0; a < n; ++a) os << (a ? ", " : "") << x(a);
        os << ") lies outside the grid box plus collar";
        fail(ErrorCode::DomainTooSmall, os.str());
    }
    // base cell and local coordinate per axis; s outside [0, 1] extrapolates linearly
    std::size_t base[8];
    double s[8];
    for (Eigen::Index a = 0; a < n; ++a) {
        const std::size_t c = counts_[static_cast<std::size_t>(a)];
        double r = (x(a) - lower_(a)) / h_(a);
        if (order_ == 0) r = std::clamp(r, 0.0, static_cast<double>(c - 1));
        const double cell = std::clamp(std::floor(r), 0.0, static_cast<double>(c - 2));
        base[a] = static_cast<std::size_t>(cell);
        s[a] = r - cell;
    }
    double out = 0.0;
    for (unsigned corner = 0; corner < (1u << n); ++corner) {
        std::size_t flat = 0, stride = 1;
        double w = 1.0;
        for (Eigen::Index a = 0; a < n; ++a) {
            const bool up = (corner >> a) & 1u;
            flat += (base[a] + (up ? 1 : 0)) * stride;
            stride *= counts_[static_cast<std::size_t>(a)];
            w *= up ? s[a] : 1.0 - s[a];
        }
        out += w * values_[flat];
    }
    return out;
}

Vec GridField::gradient(double, const Vec& x) const {
    Vec g(dim());
    Vec y = x;
    for (Eigen::Index a = 0; a < dim(); ++a) {
        y(a) = x(a) + h_(a);
        const double fp = at(y);
        y(a) = x(a) - h_(a);
        const double fm = at(y);
        y(a) = x(a);
        g(a) = (fp - fm) / (2.0 * h_(a));
    }
    return g;
}

Mat GridField::hessian(double, const Vec& x) const {
    const Eigen::Index n = dim();
    Mat H(n, n);
    const double f0 = at(x);
    Vec y = x;
    for (Eigen::Index a = 0; a < n; ++a) {
        y(a) = x(a) + h_(a);
        const double fp = at(y);
        y(a) = x(a) - h_(a);
        const double fm = at(y);
        y(a) = x(a);
        H(a, a) = (fp - 2.0 * f0 + fm) / (h_(a) * h_(a));
        for (Eigen::Index b = 0; b < a; ++b) {
            double acc = 0.0;
            for (int sa : {-1, 1})
                for (int sb : {-1, 1}) {
                    y(a) = x(a) + sa * h_(a);
                    y(b) = x(b) + sb * h_(b);
                    acc += sa * sb * at(y);
                }
            y(a) = x(a);
            y(b) = x(b);
            H(a, b) = H(b, a) = acc / (4.0 * h_(a) * h_(b));
        }
    }
    return H;
}

double pde_step_bound(const CoefficientSet& cs, const MarkMeasure& mm, const GridField& field,
                      const std::vector<double>& times, double* ellipticity) {
    const auto n = static_cast<double>(field.dim());
    const double h = field.spacing().minCoeff();
    double max_a = 0.0, max_b = 0.0, min_eig = std::numeric_limits<double>::infinity();
    for (double t : times)
        for (std::size_t i = 0; i < field.size(); ++i) {
            const Vec x = field.node(i);
            for (const Vec& u : cs.controls) {
                const Mat sig = cs.diffusion(t, x, u, NoiseHistory::none());
                const Eigen::SelfAdjointEigenSolver<Mat> es(sig * sig.transpose(), Eigen::EigenvaluesOnly);
                max_a = std::max(max_a, es.eigenvalues().maxCoeff());
                min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
                max_b = std::max(max_b, cs.drift(t, x, u, NoiseHistory::none()).cwiseAbs().maxCoeff());
            }
        }
    if (ellipticity) *ellipticity = min_eig;
    const double denom = n * max_a + h * h * (mm.total_mass() + max_b / h);
    return denom > 0.0 ? h * h / denom : std::numeric_limits<double>::infinity();
}

namespace {

// Output-node times plus internal substep times, where the bound is probed.
std::vector<double> probe_times(const TimeGrid& grid) {
    std::vector<double> t = grid.nodes();
    if (t.size() > 9) {
        std::vector<double> thin;
        for (std::size_t i = 0; i < t.size(); i += (t.size() - 1) / 8) thin.push_back(t[i]);
        if (thin.back() != t.back()) thin.push_back(t.back());
        return thin;
    }
    return t;
}

using GeneratorFn = CoefficientSet::GeneratorFn;

PdeSolution run_scheme(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                       const PdeOptions& options, const std::function<double(const Vec&)>& terminal) {
    cs.validate();
    if (options.lower.size() != cs.n || options.upper.size() != cs.n)
        fail(ErrorCode::InvalidArgument, "PDE box does not match the state dimension");
    if (cs.n > 2) fail(ErrorCode::InvalidArgument, "the PDE solver supports state dimension 1 or 2");
    if (!terminal) fail(ErrorCode::InvalidArgument, "PDE terminal condition is missing");
    Vec collar;
    if (options.collar > 0.0) collar = Vec::Constant(cs.n, options.collar);
    GridField proto(options.lower, options.upper, options.dx, options.extrapolation_order, collar);

    PdeSolution sol;
    sol.grid = grid;
    sol.dt_bound = pde_step_bound(cs, mm, proto, probe_times(grid), &sol.ellipticity);
    if (!(sol.ellipticity >= options.min_ellipticity)) {
        std::ostringstream os;
        os << "sigma sigma^T is not uniformly elliptic on the PDE box (min eigenvalue " << sol.ellipticity << ")";
        fail(ErrorCode::InvalidInstance, os.str());
    }
    if (!(options.cfl_fraction > 0.0 && options.cfl_fraction <= 1.0))
        fail(ErrorCode::InvalidArgument, "cfl_fraction must lie in (0, 1]");
    const double span = grid.dt();
    if (options.time_steps > 0) {
        sol.substeps = (options.time_steps + grid.steps() - 1) / grid.steps();
        sol.dt = span / static_cast<double>(sol.substeps);
        if (sol.dt > sol.dt_bound) {
            std::ostringstream os;
            os << "PDE time step " << sol.dt << " exceeds the stability bound " << sol.dt_bound;
            fail(ErrorCode::StepTooLarge, os.str());
        }
    } else {
        sol.substeps = std::isfinite(sol.dt_bound)
                           ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / (options.cfl_fraction * sol.dt_bound))))
                           : 1;
        sol.dt = span / static_cast<double>(sol.substeps);
    }

    sol.fields.assign(grid.steps() + 1, proto);
    GridField cur = proto;
    for (std::size_t i = 0; i < cur.size(); ++i) {
        const double v = terminal(cur.node(i));
        if (!std::isfinite(v)) fail(ErrorCode::BlowUp, "nonfinite PDE terminal value");
        cur.values()[i] = v;
    }
    sol.fields.back() = cur;
    const ZeroVectorField zero_z(cs.d);
    const ZeroMarkField zero_k;
    GridField next = cur;
    for (std::size_t k = grid.steps(); k-- > 0;) {
        for (std::size_t m = 0; m < sol.substeps; ++m) {
            const double t = grid.node(k + 1) - static_cast<double>(m) * sol.dt;
            parallel_for(cur.size(), [&](std::size_t i) {
                const Vec x = cur.node(i);
                const DriftValue dv = drift_F(cs, mm, t, x, cur, zero_z, zero_k);
                next.values()[i] = cur.values()[i] + sol.dt * dv.value;
            });
            for (double v : next.values())
                if (!std::isfinite(v)) {
                    std::ostringstream os;
                    os << "nonfinite PDE value near t = " << t;
                    fail(ErrorCode::BlowUp, os.str());
                }
            std::swap(cur.values(), next.values());
        }
        sol.fields[k] = cur;
    }
    return sol;
}

}  // namespace

PdeSolution solve_pde(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                      const PdeOptions& options, const std::function<double(const Vec&)>& terminal) {
    return run_scheme(cs, mm, grid, options, terminal);
}

JumpSplit jump_term_split(const ScalarField& field, const CoefficientSet& cs, const MarkMeasure& mm, double t,
                          const Vec& x, const Vec& u) {
    JumpSplit out;
    const double v = field.value(t, x);
    const Vec dv = field.gradient(t, x);
    for (std::size_t a = 0; a < mm.size(); ++a) {
        const Atom& atom = mm.atom(a);
        const Vec g = cs.jump(t, atom.mark, x, u, NoiseHistory::none());
        const double term = atom.weight * std::abs(field.value(t, x + g) - v - dv.dot(g));
        (atom.rho < 1.0 ? out.low : out.high) += term;
    }
    return out;
}

double fit_cv(const GridField& field, const CoefficientSet& cs, const MarkMeasure& mm, double t,
              const Vec& inner_lower, const Vec& inner_upper) {
    double c = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Vec x = field.node(i);
        if ((x - inner_lower).minCoeff() < -1e-12 || (inner_upper - x).minCoeff() < -1e-12) continue;
        for (const Vec& u : cs.controls)
            c = std::max(c, jump_term_split(field, cs, mm, t, x, u).total() * weight_p(x, cs.p));
    }
    return c;
}

BsdeSolution evaluate_field_along_path(const PdeSolution& pde, const PathBundle& bundle, const CoefficientSet& cs,
                                       const MarkMeasure& mm) {
    const TimeGrid& g = bundle.grid();
    if (g.steps() != pde.grid.steps() || std::abs(g.t0() - pde.grid.t0()) > 1e-12 ||
        std::abs(g.T() - pde.grid.T()) > 1e-12)
        fail(ErrorCode::InvalidArgument, "bundle and PDE grids differ");
    const std::size_t P = bundle.n_paths();
    const std::size_t S = g.steps();
    const std::size_t A = mm.size();
    BsdeSolution sol(P, S, bundle.d(), A);
    sol.regression_pinned = false;
    parallel_for(P, [&](std::size_t p) {
        for (std::size_t i = 0; i <= S; ++i) {
            const double t = g.node(i);
            const Vec x = bundle.state(p, i);
            const GridField& V = pde.fields[i];
            const double v = V.at(x);
            sol.y(p, i) = v;
            if (i == S) {
                sol.terminal(p) = v;
                break;
            }
            const Vec u = bundle.control(p, i);
            const Mat sig = cs.diffusion(t, x, u, NoiseHistory::none());
            sol.z(p, i) = sig.transpose() * V.gradient(t, x);
            double agg = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                const Atom& atom = mm.atom(a);
                const double k = V.at(x + cs.jump(t, atom.mark, x, u, NoiseHistory::none())) - v;
                sol.k(p, i, a) = k;
                agg += atom.weight * cs.jump_weight(t, atom.mark) * k;
            }
            sol.k_agg(p, i) = agg;
        }
    });
    double mean = 0.0;
    Vec pathwise(static_cast<Eigen::Index>(P));
    for (std::size_t p = 0; p < P; ++p) {
        mean += sol.y(p, 0);
        pathwise(static_cast<Eigen::Index>(p)) = sol.y(p, 0);
    }
    sol.y0 = mean / static_cast<double>(std::max<std::size_t>(P, 1));
    sol.y0_se = mean_se(pathwise).se;
    return sol;
}

Policy pde_policy(const PdeSolution& pde, const CoefficientSet& cs, const MarkMeasure& mm) {
    auto shared = std::make_shared<const PdeSolution>(pde);
    return [shared, cs, mm](double t, const Vec& x, const NoiseHistory&) {
        const TimeGrid& g = shared->grid;
        const double r = std::round((t - g.t0()) / g.dt());
        const std::size_t i = std::min(static_cast<std::size_t>(std::max(r, 0.0)), g.steps());
        const DriftValue dv =
            drift_F(cs, mm, t, x, shared->fields[i], ZeroVectorField(cs.d), ZeroMarkField());
        return cs.controls[dv.argmin];
    };
}

ComparisonReport comparison_check(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                                  const PdeOptions& options, const std::function<double(const Vec&)>& terminal,
                                  const PdeSolution& solved, double shift, double relax) {
    if (!(shift > 0.0) || relax < 0.0) fail(ErrorCode::InvalidArgument, "comparison check needs shift > 0, relax >= 0");
    CoefficientSet sub = cs;
    const GeneratorFn f = cs.generator;
    sub.generator = [f, shift, relax](double t, const Vec& x, const Vec& u, double y, const Vec& z, double k,
                                      const NoiseHistory& h) { return f(t, x, u, y + shift, z, k, h) - relax; };
    PdeOptions o = options;
    o.time_steps = solved.substeps * grid.steps();
    const PdeSolution w =
        run_scheme(sub, mm, grid, o, [&terminal, shift](const Vec& x) { return terminal(x) - shift; });
    ComparisonReport r;
    r.shift = shift;
    r.relax = relax;
    r.min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < w.fields.size(); ++k)
        for (std::size_t i = 0; i < w.fields[k].size(); ++i)
            r.min_gap = std::min(r.min_gap, solved.fields[k].values()[i] - w.fields[k].values()[i]);
    r.dominated = r.min_gap >= 0.0;
    return r;
}

}  // namespace jumphjb
