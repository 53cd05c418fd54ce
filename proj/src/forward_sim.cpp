// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/forward_sim.hpp"

#include "jumphjb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace jumphjb {

TimeGrid::TimeGrid(double t0, double T, std::size_t steps) : t0_(t0), T_(T), steps_(steps) {
    if (steps == 0) fail(ErrorCode::InvalidArgument, "time grid needs at least one step");
    if (!(T > t0)) fail(ErrorCode::InvalidInterval, "time grid requires T > t0");
}

std::vector<double> TimeGrid::nodes() const {
    std::vector<double> out(steps_ + 1);
    for (std::size_t i = 0; i <= steps_; ++i) out[i] = node(i);
    return out;
}

TimeGrid TimeGrid::segment(std::size_t first, std::size_t last) const {
    if (!(first < last && last <= steps_)) fail(ErrorCode::InvalidArgument, "invalid grid segment");
    return TimeGrid(node(first), node(last), last - first);
}

std::size_t TimeGrid::step_of(double t) const {
    // smallest i with t <= node(i+1)
    std::size_t lo = 0, hi = steps_ - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (t <= node(mid + 1))
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

Policy constant_policy(Vec u) {
    return [u = std::move(u)](double, const Vec&, const NoiseHistory&) { return u; };
}

// ---------------------------------------------------------------------------

PathBundle::PathBundle(TimeGrid grid, std::size_t n_paths, Eigen::Index n, Eigen::Index d, Eigen::Index k,
                       std::size_t atoms)
    : grid_(grid), n_paths_(n_paths), n_(n), d_(d), k_(k), atoms_(atoms) {
    const std::size_t steps = grid_.steps();
    states_.assign(n_paths * (steps + 1) * static_cast<std::size_t>(n), 0.0);
    brownian_.assign(n_paths * steps * static_cast<std::size_t>(d), 0.0);
    controls_.assign(n_paths * steps * static_cast<std::size_t>(k), 0.0);
    jumps_.assign(n_paths, {});
}

Eigen::Map<const Vec> PathBundle::state(std::size_t path, std::size_t node) const {
    return {states_.data() + (path * (grid_.steps() + 1) + node) * n_, n_};
}
Eigen::Map<Vec> PathBundle::state(std::size_t path, std::size_t node) {
    return {states_.data() + (path * (grid_.steps() + 1) + node) * n_, n_};
}
Eigen::Map<const Vec> PathBundle::brownian(std::size_t path, std::size_t step) const {
    return {brownian_.data() + (path * grid_.steps() + step) * d_, d_};
}
Eigen::Map<Vec> PathBundle::brownian(std::size_t path, std::size_t step) {
    return {brownian_.data() + (path * grid_.steps() + step) * d_, d_};
}
Eigen::Map<const Vec> PathBundle::control(std::size_t path, std::size_t step) const {
    return {controls_.data() + (path * grid_.steps() + step) * k_, k_};
}
Eigen::Map<Vec> PathBundle::control(std::size_t path, std::size_t step) {
    return {controls_.data() + (path * grid_.steps() + step) * k_, k_};
}

namespace {
// Jumps of one path that fall in (node(step), node(step+1)].
std::pair<std::size_t, std::size_t> step_range(const std::vector<JumpRecord>& js, const TimeGrid& grid,
                                               std::size_t step) {
    const double lo = grid.node(step);
    const double hi = grid.node(step + 1);
    auto first = std::partition_point(js.begin(), js.end(), [&](const JumpRecord& j) { return j.time <= lo; });
    auto last = std::partition_point(first, js.end(), [&](const JumpRecord& j) { return j.time <= hi; });
    return {static_cast<std::size_t>(first - js.begin()), static_cast<std::size_t>(last - js.begin())};
}
}  // namespace

int PathBundle::jump_count(std::size_t path, std::size_t step, std::size_t atom) const {
    const auto& js = jumps_[path];
    const auto [a, b] = step_range(js, grid_, step);
    int c = 0;
    for (std::size_t j = a; j < b; ++j) c += js[j].mark_index == atom ? 1 : 0;
    return c;
}

void PathBundle::jump_counts(std::size_t path, std::size_t step, std::vector<int>& out) const {
    out.assign(atoms_, 0);
    const auto& js = jumps_[path];
    const auto [a, b] = step_range(js, grid_, step);
    for (std::size_t j = a; j < b; ++j) ++out[js[j].mark_index];
}

void PathBundle::history_at(std::size_t path, std::size_t node, NoiseHistory& out) const {
    out.t = grid_.node(node);
    out.brownian.setZero(d_);
    for (std::size_t s = 0; s < node; ++s) out.brownian += brownian(path, s);
    out.counts.assign(atoms_, 0);
    const double t = out.t;
    for (const JumpRecord& j : jumps_[path]) {
        if (j.time > t) break;
        ++out.counts[j.mark_index];
    }
}

// ---------------------------------------------------------------------------

void integrate_path(const CoefficientSet& cs, const MarkMeasure& mm, const Policy& policy, PathBundle& bundle,
                    std::size_t path, std::size_t from_node) {
    const TimeGrid& grid = bundle.grid();
    const double dt = grid.dt();
    NoiseHistory hist;
    bundle.history_at(path, from_node, hist);
    Vec x = bundle.state(path, from_node);
    const auto& js = bundle.jumps(path);
    std::size_t next_jump = 0;
    while (next_jump < js.size() && js[next_jump].time <= hist.t) ++next_jump;

    for (std::size_t i = from_node; i < grid.steps(); ++i) {
        const double t = grid.node(i);
        const double t_next = grid.node(i + 1);
        const Vec u = policy(t, x, hist);
        bundle.control(path, i) = u;
        Vec dx = cs.drift(t, x, u, hist) * dt + cs.diffusion(t, x, u, hist) * bundle.brownian(path, i);
        for (std::size_t a = 0; a < mm.size(); ++a) {
            const Atom& atom = mm.atom(a);
            if (atom.weight == 0.0) continue;
            dx -= (dt * atom.weight) * cs.jump(t, atom.mark, x, u, hist);
        }
        std::size_t first_in_step = next_jump;
        while (next_jump < js.size() && js[next_jump].time <= t_next) {
            const JumpRecord& j = js[next_jump];
            dx += cs.jump(j.time, mm.atom(j.mark_index).mark, x, u, hist);
            ++next_jump;
        }
        x += dx;
        if (!x.allFinite()) {
            std::ostringstream os;
            os << "nonfinite state on path " << path << " at step " << i;
            fail(ErrorCode::BlowUp, os.str());
        }
        bundle.state(path, i + 1) = x;
        // advance the history to t_next
        hist.t = t_next;
        hist.brownian += bundle.brownian(path, i);
        for (std::size_t j = first_in_step; j < next_jump; ++j) ++hist.counts[js[j].mark_index];
    }
}

PathBundle simulate(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                    const std::vector<Vec>& initial, const Policy& policy, std::size_t n_paths,
                    const SeedSequence& seeds) {
    cs.validate();
    if (n_paths == 0) fail(ErrorCode::InvalidArgument, "n_paths must be positive");
    if (initial.size() != 1 && initial.size() != n_paths)
        fail(ErrorCode::InvalidArgument, "initial states: expected 1 or n_paths entries");
    for (const Vec& x : initial)
        if (x.size() != cs.n) fail(ErrorCode::InvalidArgument, "initial state has wrong dimension");

    PathBundle bundle(grid, n_paths, cs.n, cs.d, cs.k, mm.size());
    const double sqdt = std::sqrt(grid.dt());
    parallel_for(n_paths, [&](std::size_t p) {
        Rng rng = seeds.stream(p);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto& js = bundle.jumps(p);
        for (std::size_t i = 0; i < grid.steps(); ++i) {
            auto dw = bundle.brownian(p, i);
            for (Eigen::Index j = 0; j < cs.d; ++j) dw(j) = sqdt * normal(rng);
            mm.sample_jumps_into(grid.node(i), grid.node(i + 1), rng, js);
        }
        bundle.state(p, 0) = initial.size() == 1 ? initial[0] : initial[p];
        integrate_path(cs, mm, policy, bundle, p, 0);
    });
    return bundle;
}

double flow_check(const CoefficientSet& cs, const MarkMeasure& mm, const Policy& policy, const PathBundle& bundle,
                  std::size_t split_node) {
    const std::size_t steps = bundle.grid().steps();
    if (split_node == 0 || split_node >= steps) fail(ErrorCode::InvalidArgument, "split node must be interior");
    PathBundle restarted = bundle;
    std::vector<double> dev(bundle.n_paths(), 0.0);
    parallel_for(bundle.n_paths(), [&](std::size_t p) {
        integrate_path(cs, mm, policy, restarted, p, split_node);
        double m = 0.0;
        for (std::size_t i = split_node; i <= steps; ++i)
            m = std::max(m, (restarted.state(p, i) - bundle.state(p, i)).cwiseAbs().maxCoeff());
        dev[p] = m;
    });
    return dev.empty() ? 0.0 : *std::max_element(dev.begin(), dev.end());
}

double flow_check(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                  const Policy& policy, std::size_t split_node, std::size_t n_paths, const SeedSequence& seeds) {
    const PathBundle bundle = simulate(cs, mm, grid, {x0}, policy, n_paths, seeds);
    return flow_check(cs, mm, policy, bundle, split_node);
}

// ---------------------------------------------------------------------------

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = std::min(x.size(), y.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++used;
    }
    if (used < 2) return 0.0;
    const double nn = static_cast<double>(used);
    const double den = nn * sxx - sx * sx;
    return den == 0.0 ? 0.0 : (nn * sxy - sx * sy) / den;
}

MomentReport moment_report(const PathBundle& bundle, const std::vector<double>& exponents) {
    if (bundle.n_paths() == 0) fail(ErrorCode::InvalidArgument, "moment_report: empty bundle");
    const std::size_t steps = bundle.grid().steps();
    const std::size_t P = bundle.n_paths();
    MomentReport r;
    r.exponents = exponents;
    for (std::size_t lag = 1; lag <= std::max<std::size_t>(1, steps / 2); lag *= 2)
        r.lags.push_back(static_cast<double>(lag) * bundle.grid().dt());

    for (double q : exponents) {
        std::vector<double> sups(P);
        for (std::size_t p = 0; p < P; ++p) {
            double m = 0.0;
            for (std::size_t i = 0; i <= steps; ++i) m = std::max(m, bundle.state(p, i).norm());
            sups[p] = std::pow(m, q);
        }
        double mean = 0.0;
        for (double v : sups) mean += v;
        mean /= static_cast<double>(P);
        double var = 0.0;
        for (double v : sups) var += (v - mean) * (v - mean);
        var /= static_cast<double>(P > 1 ? P - 1 : 1);
        r.sup_moment.push_back(mean);
        r.sup_moment_se.push_back(std::sqrt(var / static_cast<double>(P)));

        std::vector<double> table;
        for (std::size_t li = 0; li < r.lags.size(); ++li) {
            const std::size_t lag = std::size_t{1} << li;
            double acc = 0.0;
            std::size_t cnt = 0;
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t i = 0; i + lag <= steps; ++i) {
                    acc += std::pow((bundle.state(p, i + lag) - bundle.state(p, i)).norm(), q);
                    ++cnt;
                }
            table.push_back(acc / static_cast<double>(cnt));
        }
        r.increment_slope.push_back(loglog_slope(r.lags, table));
        r.increment_moment.push_back(std::move(table));
    }
    return r;
}

}  // namespace jumphjb
