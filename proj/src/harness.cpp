// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/harness.hpp"

#include "jumphjb/approx_toolkit.hpp"
#include "jumphjb/digest.hpp"
#include "jumphjb/parallel.hpp"
#include "jumphjb/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace jumphjb {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const Vec& x) {
    std::string out;
    for (Eigen::Index i = 0; i < x.size(); ++i) out += (i ? ";" : "") + fmt(x(i));
    return out;
}

ojson to_json(const Vec& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

// JSON has no inf/nan; keep them readable instead of null.
ojson num(double v) {
    if (std::isfinite(v)) return v;
    return fmt(v);
}

class Table {
public:
    explicit Table(std::vector<std::string> header = {}) : header_(std::move(header)) {}
    void set_header(std::vector<std::string> h) { header_ = std::move(h); }
    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
            out += "\n";
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct Context {
    const RunRequest* req = nullptr;
    Table table;
    ojson metrics = ojson::object();
    ojson checks = ojson::array();
    ojson timings = ojson::object();
    std::vector<std::string> scenario_names;
    std::vector<std::string> scenario_hashes;

    void check(const std::string& name, bool passed, double value, double bound, const std::string& relation) {
        checks.push_back({{"name", name}, {"passed", passed}, {"value", num(value)}, {"bound", num(bound)},
                          {"relation", relation}});
    }
};

class Stopwatch {
public:
    Stopwatch(Context& ctx, std::string stage)
        : ctx_(ctx), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~Stopwatch() {
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
        ctx_.timings[stage_] = ms;
    }

private:
    Context& ctx_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::Io, "cannot write " + path.string());
    f << text;
    if (!f) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::function<double(const Vec&)> terminal_of(const Scenario& s) {
    return [h = s.cs.terminal](const Vec& x) { return h(x, NoiseHistory::none()); };
}

Policy default_policy(const Scenario& s) { return constant_policy(s.cs.controls[s.policy_control]); }

TimeGrid scenario_grid(const Scenario& s) { return TimeGrid(0.0, s.T, s.steps); }

SeedSequence seeds_of(const Scenario& s, const std::string& label) { return SeedSequence(s.seed, label); }

void require_pde(const Scenario& s, const std::string& command) {
    if (!s.pde.enabled) fail(ErrorCode::InvalidArgument, command + ": scenario '" + s.name + "' has no PDE box");
}

bool has_noise(const Scenario& s) {
    const Mat sig = s.cs.diffusion(0.0, s.x0, s.cs.controls[s.policy_control], NoiseHistory::none());
    return sig.norm() > 0.0 || s.mm.size() > 0;
}

void apply_quick(Scenario& s) {
    s.n_paths = std::min<std::size_t>(s.n_paths, 2000);
    if (s.steps > 16) {
        if (s.value.decision_stride > 0) {
            std::size_t stride = static_cast<std::size_t>(std::max<long long>(
                1, std::llround(static_cast<double>(s.value.decision_stride) * 16.0 / static_cast<double>(s.steps))));
            if (16 % stride != 0) stride = 1;
            s.value.decision_stride = stride;
        }
        s.steps = 16;
    }
    s.pde.dx = std::max(s.pde.dx, 1.0 / 16.0);
    s.pde.time_steps = 0;
    s.probe.lyapunov_points = std::min<std::size_t>(s.probe.lyapunov_points, 101);
    s.export_paths = std::min<std::size_t>(s.export_paths, 20);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_simulate(Context& ctx, const Scenario& s) {
    const TimeGrid grid = scenario_grid(s);
    PathBundle b;
    {
        Stopwatch w(ctx, s.name + ".simulate");
        b = simulate(s.cs, s.mm, grid, {s.x0}, default_policy(s), s.n_paths, seeds_of(s, "simulate"));
    }
    const Eigen::Index n = s.cs.n;
    std::vector<std::string> header{"path", "node", "t"};
    for (Eigen::Index j = 0; j < n; ++j) header.push_back("x" + std::to_string(j));
    ctx.table.set_header(header);
    const std::size_t exported = std::min(s.export_paths, b.n_paths());
    for (std::size_t p = 0; p < exported; ++p)
        for (std::size_t i = 0; i <= grid.steps(); ++i) {
            std::vector<std::string> row{std::to_string(p), std::to_string(i), fmt(grid.node(i))};
            const auto x = b.state(p, i);
            for (Eigen::Index j = 0; j < n; ++j) row.push_back(fmt(x(j)));
            ctx.table.add(row);
        }

    ojson m;
    Vec mean(n), se(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Vec v(static_cast<Eigen::Index>(b.n_paths()));
        for (std::size_t p = 0; p < b.n_paths(); ++p) v(static_cast<Eigen::Index>(p)) = b.state(p, grid.steps())(j);
        const MeanSe ms = mean_se(v);
        mean(j) = ms.mean;
        se(j) = ms.se;
    }
    m["n_paths"] = b.n_paths();
    m["exported_paths"] = exported;
    m["mean_terminal"] = to_json(mean);
    m["se_terminal"] = to_json(se);
    if (s.reference_mean_terminal) {
        const Vec& ref = *s.reference_mean_terminal;
        double worst = 0.0;
        bool ok = true;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double diff = std::abs(mean(j) - ref(j));
            if (se(j) > 0.0) {
                worst = std::max(worst, diff / se(j));
            } else {
                ok = ok && diff <= 1e-12 * (1.0 + std::abs(ref(j)));
            }
        }
        m["reference_mean_terminal"] = to_json(ref);
        m["max_z_terminal"] = worst;
        ctx.check(s.name + ".terminal_mean_within_4se", ok && worst <= 4.0, worst, 4.0, "<=");
    }
    const MomentReport mr = moment_report(b, {2.0, s.cs.p});
    m["moment_exponents"] = mr.exponents;
    m["sup_moment"] = mr.sup_moment;
    m["sup_moment_se"] = mr.sup_moment_se;
    m["increment_lags"] = mr.lags;
    m["increment_moment"] = mr.increment_moment;
    m["increment_slope"] = ojson::array();
    for (double v : mr.increment_slope) m["increment_slope"].push_back(num(v));
    if (has_noise(s)) {
        // E|X(s) - X(t)|^2 <= C |s - t| for small lags
        const double slope = mr.increment_slope.front();
        ctx.check(s.name + ".increment_slope_q2_at_least_0.9", slope >= 0.9, slope, 0.9, ">=");
    }
    ctx.metrics[s.name] = m;
}

void cmd_flow_check(Context& ctx, const Scenario& s) {
    if (ctx.table.str().empty() || ctx.scenario_names.size() <= 1)
        ctx.table.set_header({"scenario", "split_node", "n_paths", "max_deviation"});
    const TimeGrid grid = scenario_grid(s);
    const std::size_t split = std::max<std::size_t>(1, grid.steps() / 2);
    const std::size_t n = std::min<std::size_t>(s.n_paths, 2000);
    double dev = 0.0;
    {
        Stopwatch w(ctx, s.name + ".flow-check");
        dev = flow_check(s.cs, s.mm, grid, s.x0, default_policy(s), split, n, seeds_of(s, "flow-check"));
    }
    ctx.table.add({s.name, std::to_string(split), std::to_string(n), fmt(dev)});
    ctx.metrics[s.name] = {{"split_node", split}, {"n_paths", n}, {"max_deviation", dev}};
    ctx.check(s.name + ".flow_deviation", dev <= 1e-12, dev, 1e-12, "<=");
}

void cmd_solve_bsde(Context& ctx, const Scenario& s) {
    const TimeGrid grid = scenario_grid(s);
    const SeedSequence seeds = seeds_of(s, "solve-bsde");
    PathBundle b;
    BsdeSolution sol;
    {
        Stopwatch w(ctx, s.name + ".solve");
        b = simulate(s.cs, s.mm, grid, {s.x0}, default_policy(s), s.n_paths, seeds);
        sol = solve(s.cs, s.mm, b, s.bsde);
    }
    const ResidualTable res = martingale_residuals(s.cs, s.mm, b, sol);
    ctx.table.set_header({"node", "t", "mean_y", "residual_mean", "residual_se"});
    std::size_t beyond = 0;
    for (std::size_t i = 0; i <= grid.steps(); ++i) {
        double my = 0.0;
        for (std::size_t p = 0; p < sol.n_paths(); ++p) my += sol.y(p, i);
        my /= static_cast<double>(sol.n_paths());
        std::vector<std::string> row{std::to_string(i), fmt(grid.node(i)), fmt(my)};
        if (i < grid.steps()) {
            row.push_back(fmt(res.mean[i]));
            row.push_back(fmt(res.se[i]));
            if (std::abs(res.mean[i]) > 4.0 * res.se[i] + 1e-10) ++beyond;  // floor: exact-fit round-off
        } else {
            row.push_back("");
            row.push_back("");
        }
        ctx.table.add(row);
    }
    ojson m;
    m["y0"] = sol.y0;
    m["y0_se"] = sol.y0_se;
    m["residual_steps_beyond_4se"] = beyond;
    const std::size_t allowed = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(grid.steps())));
    ctx.check(s.name + ".residual_steps_beyond_4se", beyond <= allowed, static_cast<double>(beyond),
              static_cast<double>(allowed), "<=");
    if (s.reference) {
        const double ref = s.reference(0.0, s.x0);
        const double rel = std::abs(sol.y0 - ref) / std::max(std::abs(ref), 1e-300);
        m["reference"] = ref;
        m["relative_error"] = rel;
        ctx.check(s.name + ".y0_within_1pct_of_reference", rel <= 0.01, rel, 0.01, "<=");
    }
    {
        Stopwatch w(ctx, s.name + ".apriori");
        const AprioriReport a = apriori_report(s.cs, s.mm, grid, s.x0, default_policy(s), s.bsde,
                                               std::min<std::size_t>(s.n_paths, 20000), seeds.child("apriori"));
        m["apriori"] = {{"envelope_constant", num(a.envelope_constant)},
                        {"y0_doubled", num(a.y0_doubled)},
                        {"growth_factor", num(a.growth_factor)},
                        {"growth_bound", num(a.growth_bound)},
                        {"y0_perturbed", num(a.y0_perturbed)},
                        {"stability_constant", num(a.stability_constant)},
                        {"sup_second_moment", num(a.sup_second_moment)}};
    }
    ctx.metrics[s.name] = m;
}

void cmd_value(Context& ctx, const Scenario& s) {
    const TimeGrid grid = scenario_grid(s);
    ValueEstimate est;
    {
        Stopwatch w(ctx, s.name + ".value");
        est = value(s.cs, s.mm, grid, s.x0, policy_family(s, grid), value_options(s), s.n_paths,
                    seeds_of(s, "value"));
    }
    ojson m;
    m["mode"] = to_string(est.mode);
    m["value"] = est.value;
    m["std_error"] = est.std_error;
    m["policy_cost"] = est.policy_cost;
    m["optimizer"] = est.optimizer;
    m["decision_nodes"] = est.family.decision_nodes;
    if (est.mode == ValueMode::OpenLoop) {
        ctx.table.set_header({"sequence", "digits", "cost", "se"});
        const std::size_t C = est.family.candidates.size(), L = est.family.intervals();
        for (std::size_t k = 0; k < est.sequence_costs.size(); ++k) {
            std::string digits;
            for (std::size_t d : sequence_digits(k, C, L)) digits += std::to_string(d);
            ctx.table.add({std::to_string(k), digits, fmt(est.sequence_costs[k]), fmt(est.sequence_se[k])});
        }
        m["sequence"] = est.sequence;
    } else {
        ctx.table.set_header({"interval", "node", "candidate", "x", "q"});
        std::vector<Vec> xs{s.x0};
        if (s.cs.n == 1 && s.value.explore_lower.size() == 1) xs = lattice(s.value.explore_lower, s.value.explore_upper, 21);
        for (std::size_t j = 0; j < est.q_fn.size(); ++j)
            for (std::size_t c = 0; c < est.q_fn[j].size(); ++c)
                for (const Vec& x : xs)
                    ctx.table.add({std::to_string(j), std::to_string(est.family.decision_nodes[j]), std::to_string(c),
                                   join(x), fmt(est.q_fn[j][c](x))});
        m["argmin_at_x0"] = est.argmin(0, s.x0);
    }
    ctx.check(s.name + ".value_finite", std::isfinite(est.value) && std::isfinite(est.std_error), est.value, 0.0,
              "finite");
    ctx.metrics[s.name] = m;
}

void cmd_dpp_check(Context& ctx, const Scenario& s) {
    ctx.table.set_header({"steps", "dt", "split_node", "full", "full_se", "rhs", "rhs_se", "residual", "combined_se"});
    std::vector<std::size_t> steps{s.steps};
    if (s.steps % 2 == 0 && s.steps >= 4) steps.insert(steps.begin(), s.steps / 2);
    std::vector<DppReport> reps;
    for (std::size_t n : steps) {
        const TimeGrid grid(0.0, s.T, n);
        Stopwatch w(ctx, s.name + ".dpp." + std::to_string(n));
        const DppReport r = dpp_residual(s.cs, s.mm, grid, s.x0, policy_family(s, grid), s.value.dpp_split,
                                         value_options(s), s.n_paths, seeds_of(s, "dpp-check").child("steps", n));
        reps.push_back(r);
        ctx.table.add({std::to_string(n), fmt(grid.dt()), std::to_string(r.split_node), fmt(r.full), fmt(r.full_se),
                       fmt(r.rhs), fmt(r.rhs_se), fmt(r.residual), fmt(r.combined_se)});
    }
    const DppReport& fine = reps.back();
    ojson m;
    m["steps"] = steps;
    m["residual"] = ojson::array();
    m["combined_se"] = ojson::array();
    for (const auto& r : reps) {
        m["residual"].push_back(r.residual);
        m["combined_se"].push_back(r.combined_se);
    }
    const double allowance = reps.size() > 1 ? std::abs(reps[1].full - reps[0].full) : 0.0;
    const double bound = 2.0 * fine.combined_se + allowance;
    m["discretization_allowance"] = allowance;
    m["bound"] = bound;
    ctx.check(s.name + ".dpp_residual_within_2se_plus_allowance", fine.residual <= bound, fine.residual, bound, "<=");
    if (reps.size() > 1)
        ctx.check(s.name + ".dpp_residual_decreases_with_dt", fine.residual < reps[0].residual, fine.residual,
                  reps[0].residual, "<");
    ctx.metrics[s.name] = m;
}

double inner_reference_error(const Scenario& s, const PdeSolution& sol) {
    double err = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < sol.fields.size(); ++k) {
        const GridField& f = sol.fields[k];
        const Vec mid = 0.5 * (f.lower() + f.upper());
        const Vec half = 0.25 * (f.upper() - f.lower());
        for (std::size_t i = 0; i < f.size(); ++i) {
            const Vec x = f.node(i);
            if (((x - mid).cwiseAbs() - half).maxCoeff() > 1e-12) continue;
            const double ref = s.reference(sol.grid.node(k), x);
            err = std::max(err, std::abs(f.values()[i] - ref));
            scale = std::max(scale, std::abs(ref));
        }
    }
    return scale > 0.0 ? err / scale : err;
}

void cmd_solve_pde(Context& ctx, const Scenario& s) {
    require_pde(s, "solve-pde");
    ctx.table.set_header({"scenario", "node", "x", "value", "reference"});
    const TimeGrid grid = scenario_grid(s);
    const PdeOptions opts = pde_options(s);
    PdeSolution sol;
    {
        Stopwatch w(ctx, s.name + ".solve-pde");
        sol = solve_pde(s.cs, s.mm, grid, opts, terminal_of(s));
    }
    const GridField& f0 = sol.fields.front();
    for (std::size_t i = 0; i < f0.size(); ++i) {
        const Vec x = f0.node(i);
        ctx.table.add({s.name, std::to_string(i), join(x), fmt(f0.values()[i]),
                       s.reference ? fmt(s.reference(0.0, x)) : std::string()});
    }
    ojson m;
    m["value_at_x0"] = sol.value(s.x0);
    m["dx"] = opts.dx;
    m["dt"] = sol.dt;
    m["dt_bound"] = sol.dt_bound;
    m["substeps"] = sol.substeps;
    m["ellipticity"] = sol.ellipticity;
    if (s.reference) {
        const double rel = inner_reference_error(s, sol);
        m["inner_sup_relative_error"] = rel;
        ctx.check(s.name + ".pde_within_1pct_of_reference", rel <= 0.01, rel, 0.01, "<=");
    }
    ComparisonReport c;
    {
        Stopwatch w(ctx, s.name + ".comparison");
        c = comparison_check(s.cs, s.mm, grid, opts, terminal_of(s), sol, 0.1, 0.05);
    }
    m["comparison"] = {{"shift", c.shift}, {"relax", c.relax}, {"min_gap", c.min_gap}, {"dominated", c.dominated}};
    ctx.check(s.name + ".shifted_subsolution_dominated", c.dominated, c.min_gap, 0.0, ">=");
    ctx.metrics[s.name] = m;
}

struct McValue {
    double value = 0.0, se = 0.0;
};

McValue mc_value(const Scenario& s, const TimeGrid& grid, const SeedSequence& seeds) {
    if (s.cs.controls.size() == 1) {
        const CostEstimate c = recursive_cost(s.cs, s.mm, grid, s.x0, default_policy(s), s.bsde, s.n_paths, seeds);
        return {c.value, c.se};
    }
    const ValueEstimate v = value(s.cs, s.mm, grid, s.x0, policy_family(s, grid), value_options(s), s.n_paths, seeds);
    return {v.value, v.std_error};
}

void cmd_cross_check(Context& ctx, const Scenario& s) {
    require_pde(s, "cross-check");
    ctx.table.set_header({"scenario", "level", "steps", "dx", "pde", "mc", "mc_se"});
    std::vector<double> pde, mc, se;
    const std::size_t coarse_steps = std::max<std::size_t>(1, s.steps / 2);
    for (int level = 0; level < 2; ++level) {
        const std::size_t steps = level == 0 ? coarse_steps : s.steps;
        const TimeGrid grid(0.0, s.T, steps);
        PdeOptions opts = pde_options(s);
        if (level == 0) opts.dx *= 2.0;
        opts.time_steps = 0;
        Stopwatch w(ctx, s.name + ".cross-check." + std::to_string(level));
        const PdeSolution sol = solve_pde(s.cs, s.mm, grid, opts, terminal_of(s));
        const McValue v = mc_value(s, grid, seeds_of(s, "cross-check").child("level", static_cast<std::uint64_t>(level)));
        pde.push_back(sol.value(s.x0));
        mc.push_back(v.value);
        se.push_back(v.se);
        ctx.table.add({s.name, level == 0 ? "coarse" : "fine", std::to_string(steps), fmt(opts.dx), fmt(pde.back()),
                       fmt(mc.back()), fmt(se.back())});
    }
    const double allowance = std::abs(pde[1] - pde[0]) + std::abs(mc[1] - mc[0]) + 3.0 * se[1];
    const double gap = std::abs(pde[1] - mc[1]);
    ctx.metrics[s.name] = {{"pde", pde},     {"mc", mc},           {"mc_se", se},
                           {"gap", gap},     {"allowance", allowance}};
    ctx.check(s.name + ".pde_mc_gap_within_allowance", gap <= allowance, gap, allowance, "<=");
}

void cmd_mollify_report(Context& ctx, const Scenario& s) {
    require_pde(s, "mollify-report");
    const TimeGrid grid = scenario_grid(s);
    const PdeOptions opts = pde_options(s);
    const Vec mid = 0.5 * (opts.lower + opts.upper);
    const Vec quarter = 0.25 * (opts.upper - opts.lower);
    SandwichReport rep;
    {
        Stopwatch w(ctx, s.name + ".sandwich");
        rep = envelope_sandwich(s.cs, s.mm, grid, opts, s.approx.levels, s.approx.quadrature_order, mid - quarter,
                                mid + quarter, s.cs.n == 1 ? 61 : 21);
    }
    ctx.table.set_header({"level", "delta_h", "delta_f_max", "delta_lambda_max", "y0", "width", "violations",
                          "min_slack"});
    ojson m;
    m["c_v"] = rep.c_v;
    m["l_y"] = rep.l_y;
    m["c_phi"] = rep.c_phi;
    m["levels"] = ojson::array();
    auto vmax = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    double identity = 0.0;
    std::vector<double> inv_w;
    for (const Vec& x : lattice(opts.lower, opts.upper, 9)) inv_w.push_back(1.0 / weight_p(x, s.cs.p));
    for (const SandwichLevel& lv : rep.levels) {
        ctx.table.add({std::to_string(lv.level), fmt(lv.errors.delta_h), fmt(vmax(lv.errors.delta_f)),
                       fmt(vmax(lv.errors.delta_lambda)), fmt(lv.y0), fmt(lv.width), std::to_string(lv.violations),
                       fmt(lv.min_slack)});
        m["levels"].push_back({{"level", lv.level},
                               {"delta_h", lv.errors.delta_h},
                               {"delta_f", lv.errors.delta_f},
                               {"delta_lambda", lv.errors.delta_lambda},
                               {"y0", lv.y0},
                               {"width", lv.width},
                               {"violations", lv.violations},
                               {"min_slack", num(lv.min_slack)}});
        BoundingInputs in{lv.errors.delta_h, lv.errors.delta_f, lv.errors.delta_lambda, rep.c_v, rep.l_y, rep.c_phi};
        const auto id = envelope_identity(in, bounding_bsde(in, grid), grid, inv_w);
        identity = std::max({identity, id.ode, id.cancellation});
        ctx.check(s.name + ".envelope_brackets_level_" + std::to_string(lv.level), lv.violations == 0,
                  lv.min_slack, 0.0, ">=");
    }
    m["envelope_identity_residual"] = identity;
    ctx.check(s.name + ".envelope_identity_cancels", identity <= 1e-12, identity, 1e-12, "<=");

    // each error at least halves (20% slack) between consecutive levels
    for (std::size_t k = 0; k + 1 < rep.levels.size(); ++k) {
        const auto& a = rep.levels[k];
        const auto& b = rep.levels[k + 1];
        const double factor = static_cast<double>(b.level) / static_cast<double>(a.level);
        const double need = 0.8 * factor;
        const std::string tag = std::to_string(a.level) + "_to_" + std::to_string(b.level);
        const std::vector<std::pair<std::string, std::pair<double, double>>> errs{
            {"delta_h", {a.errors.delta_h, b.errors.delta_h}},
            {"delta_f", {vmax(a.errors.delta_f), vmax(b.errors.delta_f)}},
            {"delta_lambda", {vmax(a.errors.delta_lambda), vmax(b.errors.delta_lambda)}}};
        for (const auto& [name, pr] : errs) {
            if (pr.first <= 1e-12) {
                ctx.check(s.name + "." + name + "_exact_" + tag, pr.second <= 1e-12, pr.second, 1e-12, "<=");
                continue;
            }
            const double ratio = pr.second > 0.0 ? pr.first / pr.second : std::numeric_limits<double>::infinity();
            ctx.check(s.name + "." + name + "_decay_" + tag, ratio >= need, ratio, need, ">=");
        }
        // at round-off level the mollification is exact and there is nothing left to shrink
        if (a.y0 <= 1e-12) {
            ctx.check(s.name + ".bounding_y0_exact_" + tag, b.y0 <= 1e-12, b.y0, 1e-12, "<=");
        } else {
            ctx.check(s.name + ".bounding_y0_decreases_" + tag, b.y0 < a.y0, b.y0, a.y0, "<");
        }
        ctx.check(s.name + ".envelope_width_shrinks_" + tag, b.width <= 1.05 * a.width + 1e-12, b.width,
                  1.05 * a.width + 1e-12, "<=");
    }

    // Lipschitz preservation on three scenario functions
    Rng rng = seeds_of(s, "mollify-report").stream(0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<std::pair<Vec, Vec>> pairs;
    const Vec lo = s.probe.lower, hi = s.probe.upper;
    for (int i = 0; i < 200; ++i) {
        Vec a(s.cs.n), d(s.cs.n);
        for (Eigen::Index j = 0; j < s.cs.n; ++j) {
            a(j) = lo(j) + U(rng) * (hi(j) - lo(j));
            d(j) = (U(rng) - 0.5) * 0.2 * (hi(j) - lo(j));
        }
        pairs.emplace_back(a, a + d);
    }
    const NoiseHistory& none = NoiseHistory::none();
    const Vec u0 = s.cs.controls[s.policy_control];
    const Vec z0 = Vec::Zero(s.cs.d);
    const std::vector<std::pair<std::string, std::function<double(const Vec&)>>> funcs{
        {"terminal", terminal_of(s)},
        {"drift", [&](const Vec& x) { return s.cs.drift(0.0, x, u0, none)(0); }},
        {"generator", [&](const Vec& x) { return s.cs.generator(0.0, x, u0, 0.0, z0, 0.0, none); }}};
    m["lipschitz"] = ojson::object();
    for (const auto& [name, f] : funcs) {
        const double lip = empirical_lipschitz(f, pairs);
        ojson per = {{"original", lip}};
        for (int l : s.approx.levels) {
            const MollifierSpec spec{l, s.cs.n, s.approx.quadrature_order};
            const double lip_l = empirical_lipschitz([&](const Vec& x) { return mollify(f, spec, x); }, pairs);
            per["level_" + std::to_string(l)] = lip_l;
            ctx.check(s.name + ".lipschitz_preserved_" + name + "_level_" + std::to_string(l), lip_l <= lip + 1e-6,
                      lip_l, lip + 1e-6, "<=");
        }
        m["lipschitz"][name] = per;
    }
    ctx.metrics[s.name] = m;
}

void cmd_lyapunov_report(Context& ctx, const Scenario& s) {
    ctx.table.set_header({"scenario", "p", "radius", "points_per_axis", "c_phi", "c_weighted", "nonfinite"});
    const Eigen::Index n = s.cs.n;
    const double cap = n == 1 ? 1e9 : 1e5;
    std::size_t pts = std::min<std::size_t>(
        s.probe.lyapunov_points,
        static_cast<std::size_t>(std::floor(std::pow(cap, 1.0 / static_cast<double>(n)))));
    if (pts % 2 == 0) --pts;  // keep the origin on the lattice
    const double R = s.probe.lyapunov_radius;
    ojson m = ojson::object();
    for (double p : {2.0, 3.0}) {
        std::vector<LyapunovReport> reps;
        for (int k = 0; k < 2; ++k) {
            const double r = R * (k + 1);
            const std::size_t q = k == 0 ? pts : 2 * pts - 1;
            Stopwatch w(ctx, s.name + ".lyapunov.p" + fmt(p) + ".r" + fmt(r));
            reps.push_back(lyapunov_check(s.cs, s.mm, p, lattice(Vec::Constant(n, -r), Vec::Constant(n, r), q)));
            ctx.table.add({s.name, fmt(p), fmt(r), std::to_string(q), fmt(reps.back().c_phi),
                           fmt(reps.back().c_weighted), std::to_string(reps.back().nonfinite)});
        }
        const std::string tag = s.name + ".p" + fmt(p);
        const double c1 = reps[0].c_phi, c2 = reps[1].c_phi;
        m["p" + fmt(p)] = {{"c_phi", {num(c1), num(c2)}},
                           {"c_weighted", {num(reps[0].c_weighted), num(reps[1].c_weighted)}},
                           {"argmax", to_json(reps[0].argmax)},
                           {"nonfinite", reps[0].nonfinite + reps[1].nonfinite}};
        const bool finite = std::isfinite(c1) && std::isfinite(c2) && reps[0].nonfinite + reps[1].nonfinite == 0;
        ctx.check(tag + ".c_phi_finite", finite, c1, 0.0, "finite");
        const double drift = std::abs(c2 - c1);
        ctx.check(tag + ".c_phi_box_stable", finite && drift <= 0.1 * std::abs(c1) + 1e-12, drift,
                  0.1 * std::abs(c1), "<=");
    }
    if (s.pure_diffusion_scale) {
        const double c = *s.pure_diffusion_scale;
        const FunctionField phi = lyapunov_phi(2.0);
        double worst = 0.0;
        for (const Vec& x : lattice(Vec::Constant(n, -R), Vec::Constant(n, R), std::min<std::size_t>(pts, 101)))
            for (const Vec& u : s.cs.controls) {
                const double ratio = generator_L(s.cs, s.mm, 0.0, x, u, phi) / phi.value(0.0, x);
                const double exact = static_cast<double>(n) * c * c / (1.0 + x.squaredNorm());
                worst = std::max(worst, std::abs(ratio - exact));
            }
        m["pure_diffusion_max_abs_error"] = worst;
        ctx.check(s.name + ".pure_diffusion_ratio_exact", worst <= 1e-10, worst, 1e-10, "<=");
    }
    ctx.metrics[s.name] = m;
}

void cmd_project_report(Context& ctx, const Scenario& s) {
    const TimeGrid grid = scenario_grid(s);
    const std::size_t P = std::min<std::size_t>(s.n_paths, ctx.req->quick ? 1500 : 4000);
    PathBundle b;
    {
        Stopwatch w(ctx, s.name + ".simulate");
        b = simulate(s.cs, s.mm, grid, {s.x0}, default_policy(s), P, seeds_of(s, "project-report"));
    }
    std::vector<NoiseProjection> projs;
    for (const auto& [N, M] : s.approx.projection)
        projs.push_back(project_noise(b, static_cast<std::size_t>(N), static_cast<std::size_t>(M)));
    Vec target(static_cast<Eigen::Index>(P)), wT(static_cast<Eigen::Index>(P));
    for (std::size_t p = 0; p < P; ++p) {
        target(static_cast<Eigen::Index>(p)) = b.state(p, grid.steps())(0);
        double w = 0.0;
        for (std::size_t i = 0; i < grid.steps(); ++i) w += b.brownian(p, i)(0);
        wT(static_cast<Eigen::Index>(p)) = w;
    }
    std::vector<double> res;
    {
        Stopwatch w(ctx, s.name + ".projection");
        res = projection_error(target, projs);
    }
    ctx.table.set_header({"N", "M", "groups", "features", "residual_rms"});
    for (std::size_t k = 0; k < projs.size(); ++k)
        ctx.table.add({std::to_string(s.approx.projection[k].first), std::to_string(s.approx.projection[k].second),
                       std::to_string(projs[k].group_count()),
                       std::to_string(projs[k].intervals() * (static_cast<std::size_t>(projs[k].d()) +
                                                              projs[k].group_count())),
                       fmt(res[k])});
    ojson m;
    m["n_paths"] = P;
    m["residual"] = res;
    bool monotone = true;
    for (std::size_t k = 1; k < res.size(); ++k) monotone = monotone && res[k] <= res[k - 1] * (1.0 + 1e-12);
    ctx.check(s.name + ".projection_residual_nonincreasing", monotone, res.empty() ? 0.0 : res.back(),
              res.empty() ? 0.0 : res.front(), "<=");
    const double w_res = projection_error(wT, {projs.front()}).front();
    m["brownian_terminal_residual"] = w_res;
    ctx.check(s.name + ".terminal_brownian_exact", w_res <= 1e-8, w_res, 1e-8, "<=");
    bool lossless = true;
    const NoiseProjection& fine = projs.back();
    for (std::size_t p = 0; p < P; ++p) {
        long total = 0;
        for (std::size_t i = 0; i < fine.intervals(); ++i)
            for (std::size_t g = 0; g < fine.group_count(); ++g) total += fine.count(p, i, g);
        lossless = lossless && total == static_cast<long>(b.jumps(p).size());
    }
    ctx.check(s.name + ".counts_lossless", lossless, lossless ? 1.0 : 0.0, 1.0, "==");
    const auto& [N, M] = s.approx.projection.back();
    const bool repeat = project_noise(b, static_cast<std::size_t>(N), static_cast<std::size_t>(M)) == fine;
    ctx.check(s.name + ".projection_repeatable", repeat, repeat ? 1.0 : 0.0, 1.0, "==");
    ctx.metrics[s.name] = m;
}

void cmd_penalty_report(Context& ctx, const Scenario& s) {
    const Eigen::Index n = s.cs.n;
    const Vec center = s.x0;
    Rng rng = seeds_of(s, "penalty-report").stream(0);
    std::normal_distribution<double> N(0.0, 1.5);
    ctx.table.set_header({"p", "point", "x", "value", "gradient_rel_error", "hessian_rel_error", "min_eig",
                          "lower_bound"});
    ojson m = ojson::object();
    m["center"] = to_json(center);
    for (double p : {2.0, 3.0}) {
        double worst_g = 0.0, worst_h = 0.0, worst_eig = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 100; ++k) {
            Vec x(n);
            for (Eigen::Index j = 0; j < n; ++j) x(j) = center(j) + N(rng);
            const PenaltyValue v = penalty_chi(x, center, p);
            const double h = 1e-5 * (1.0 + x.norm());
            Vec g(n);
            Mat H(n, n);
            for (Eigen::Index j = 0; j < n; ++j) {
                Vec xp = x, xm = x;
                xp(j) += h;
                xm(j) -= h;
                const PenaltyValue vp = penalty_chi(xp, center, p), vm = penalty_chi(xm, center, p);
                g(j) = (vp.value - vm.value) / (2.0 * h);
                H.col(j) = (vp.gradient - vm.gradient) / (2.0 * h);
            }
            const double eg = (g - v.gradient).norm() / std::max(1.0, v.gradient.norm());
            const double eh = (H - v.hessian).norm() / std::max(1.0, v.hessian.norm());
            worst_g = std::max(worst_g, eg);
            worst_h = std::max(worst_h, eh);
            worst_eig = std::min(worst_eig, v.hessian_min_eig - v.lower_bound);
            ctx.table.add({fmt(p), std::to_string(k), join(x), fmt(v.value), fmt(eg), fmt(eh), fmt(v.hessian_min_eig),
                           fmt(v.lower_bound)});
        }
        const std::string tag = s.name + ".p" + fmt(p);
        ctx.check(tag + ".gradient_matches_fd", worst_g <= 1e-6, worst_g, 1e-6, "<=");
        ctx.check(tag + ".hessian_matches_fd", worst_h <= 1e-6, worst_h, 1e-6, "<=");
        ctx.check(tag + ".hessian_min_eig_bound", worst_eig >= -1e-8, worst_eig, -1e-8, ">=");
        m["p" + fmt(p)] = {{"gradient_rel_error", worst_g}, {"hessian_rel_error", worst_h},
                           {"min_eig_minus_bound", worst_eig}};
    }
    // penalized V-like fields peak strictly inside the probe box
    std::vector<std::pair<std::string, std::function<double(const Vec&)>>> fields{{"terminal", terminal_of(s)}};
    if (s.reference) fields.emplace_back("reference", [&](const Vec& x) { return s.reference(0.0, x); });
    const std::size_t pts = n == 1 ? 2001 : 201;
    const Vec lo = center.array() - 10.0, hi = center.array() + 10.0;
    for (const auto& [name, f] : fields)
        for (double eps : {0.1, 0.01}) {
            const PenaltyDomination d = penalty_domination(f, center, s.cs.p, eps, lo, hi, pts);
            m["domination_" + name + "_eps" + fmt(eps)] = {{"argmax", to_json(d.argmax)}, {"max", d.max_value}};
            ctx.check(s.name + ".penalized_" + name + "_max_interior_eps" + fmt(eps), d.interior, d.argmax.norm(),
                      10.0, "interior");
        }
    ctx.metrics[s.name] = m;
}

void cmd_list(Context& ctx) {
    ctx.table.set_header({"name", "description"});
    std::size_t loaded = 0;
    const auto items = list_builtin();
    for (const auto& [name, desc] : items) {
        std::string d = desc;
        std::replace(d.begin(), d.end(), ',', ';');
        ctx.table.add({name, d});
        try {
            builtin_scenario(name);
            ++loaded;
        } catch (const Error&) {
        }
    }
    const std::string h1 = registry_digest(), h2 = registry_digest();
    ctx.metrics["registry_digest"] = h1;
    ctx.metrics["count"] = items.size();
    ctx.metrics["commands"] = command_names();
    ctx.check("registry.at_least_6_entries", items.size() >= 6, static_cast<double>(items.size()), 6.0, ">=");
    ctx.check("registry.all_load", loaded == items.size(), static_cast<double>(loaded),
              static_cast<double>(items.size()), "==");
    ctx.check("registry.digest_stable", h1 == h2, 1.0, 1.0, "==");
}

void cmd_determinism(Context& ctx, const RunRequest& req) {
    ctx.table.set_header({"command", "status", "results_sha256", "report_sha256", "identical"});
    const unsigned saved = thread_count();
    ojson m = ojson::object();
    for (const std::string& c : command_names()) {
        if (c == "determinism-check" || c == "list") continue;
        std::string digest[2][2];
        std::string status = "ok";
        for (int r = 0; r < 2; ++r) {
            RunRequest sub = req;
            sub.command = c;
            sub.quick = true;
            sub.threads = r == 0 ? 1 : 3;
            sub.out_dir = (fs::path(req.out_dir) / c / (r == 0 ? "a" : "b")).string();
            try {
                Stopwatch w(ctx, "determinism." + c + "." + std::to_string(r));
                run_command(sub);
                digest[r][0] = sha256_file((fs::path(sub.out_dir) / "results.csv").string());
                digest[r][1] = sha256_file((fs::path(sub.out_dir) / "report.json").string());
            } catch (const Error& e) {
                if (e.code() != ErrorCode::InvalidArgument) {
                    set_thread_count(saved);
                    throw;
                }
                status = std::string("skipped: ") + e.what();
            }
        }
        set_thread_count(saved);
        if (status != "ok") {
            ctx.table.add({c, "skipped", "", "", ""});
            m[c] = status;
            continue;
        }
        const bool same = digest[0][0] == digest[1][0] && digest[0][1] == digest[1][1];
        ctx.table.add({c, status, digest[0][0], digest[0][1], same ? "true" : "false"});
        m[c] = {{"results_sha256", digest[0][0]}, {"identical", same}};
        ctx.check(c + ".byte_identical_rerun", same, same ? 1.0 : 0.0, 1.0, "==");
    }
    ctx.metrics = m;
}

using ScenarioCommand = void (*)(Context&, const Scenario&);

struct CommandInfo {
    const char* name;
    const char* help;
    ScenarioCommand fn;
    bool sweeps;  // accepts --scenario all
};

const std::vector<CommandInfo>& commands() {
    static const std::vector<CommandInfo> list{
        {"simulate", "forward paths, terminal moments and increment-moment slopes", cmd_simulate, false},
        {"flow-check", "restart paths mid-horizon on identical noise and compare", cmd_flow_check, true},
        {"solve-bsde", "recursive cost by backward regression, residuals and a-priori ratios", cmd_solve_bsde, false},
        {"value", "value function by open-loop enumeration or feedback recursion", cmd_value, false},
        {"dpp-check", "dynamic programming residual at two step sizes", cmd_dpp_check, false},
        {"solve-pde", "integro-PDE solve, reference error and comparison check", cmd_solve_pde, true},
        {"cross-check", "PDE value against Monte Carlo with a discretization allowance", cmd_cross_check, true},
        {"mollify-report", "mollification errors, bounding ODE and envelope sandwich", cmd_mollify_report, false},
        {"lyapunov-report", "Lyapunov ratio of 1 + |x|^p under box doubling", cmd_lyapunov_report, true},
        {"project-report", "noise projection residuals across partitions", cmd_project_report, false},
        {"penalty-report", "penalty function derivatives and localization", cmd_penalty_report, false},
        {"determinism-check", "rerun every command twice and compare outputs", nullptr, false},
        {"list", "built-in scenarios", nullptr, false},
    };
    return list;
}

const CommandInfo* find_command(const std::string& name) {
    for (const auto& c : commands())
        if (name == c.name) return &c;
    return nullptr;
}

std::vector<std::string> sweep_set(const std::string& command) {
    std::vector<std::string> out;
    if (command == "cross-check") return {"heat-reduction", "jump-transport", "two-control-1d"};
    for (const auto& [name, desc] : list_builtin()) {
        if (command == "solve-pde" && !builtin_scenario(name).pde.enabled) continue;
        out.push_back(name);
    }
    return out;
}

}  // namespace

std::vector<std::string> command_names() {
    std::vector<std::string> out;
    for (const auto& c : commands()) out.emplace_back(c.name);
    return out;
}

std::string command_help(const std::string& command) {
    const CommandInfo* c = find_command(command);
    return c ? c->help : "";
}

int exit_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::Schema:
        case ErrorCode::InvalidArgument:
            return 2;
        case ErrorCode::InvalidInterval:
        case ErrorCode::InvalidInstance:
        case ErrorCode::BlowUp:
        case ErrorCode::IllConditionedBasis:
        case ErrorCode::StepTooLarge:
        case ErrorCode::DomainTooSmall:
            return 3;
        case ErrorCode::EnumerationTooLarge:
            return 4;
        case ErrorCode::Io:
            return 1;
    }
    return 1;
}

std::string error_json(ErrorCode code, const std::string& message) {
    ojson j = {{"error", {{"code", to_string(code)}, {"status", exit_status(code)}, {"message", message}}}};
    return j.dump(2) + "\n";
}

RunSummary run_command(const RunRequest& req) {
    const CommandInfo* info = find_command(req.command);
    if (!info) fail(ErrorCode::InvalidArgument, "unknown command '" + req.command + "'");
    if (req.out_dir.empty()) fail(ErrorCode::InvalidArgument, "an output directory is required");
    if (req.threads > 0) set_thread_count(req.threads);

    Context ctx;
    ctx.req = &req;
    const std::string cmd = req.command;
    std::uint64_t seed_used = 0;

    if (cmd == "list") {
        cmd_list(ctx);
    } else {
        if (req.scenario.empty() && !req.loaded) fail(ErrorCode::InvalidArgument, cmd + " needs a scenario");
        std::error_code ec;
        fs::create_directories(req.out_dir, ec);
        if (ec) fail(ErrorCode::Io, "cannot create " + req.out_dir + ": " + ec.message());
        if (cmd == "determinism-check") {
            Scenario s = req.loaded ? *req.loaded : load_scenario(req.scenario);
            if (req.seed) s.seed = *req.seed;
            seed_used = s.seed;
            ctx.scenario_names.push_back(s.name);
            ctx.scenario_hashes.push_back(sha256_hex(s.canonical));
            cmd_determinism(ctx, req);
        } else {
            std::vector<std::string> specs{req.scenario};
            if (req.loaded) {
                specs = {""};
            } else if (req.scenario == "all") {
                if (!info->sweeps) fail(ErrorCode::InvalidArgument, cmd + " does not accept --scenario all");
                specs = sweep_set(cmd);
            }
            for (const std::string& spec : specs) {
                Scenario s = req.loaded ? *req.loaded : load_scenario(spec);
                if (req.seed) s.seed = *req.seed;
                if (req.quick) apply_quick(s);
                seed_used = s.seed;
                ctx.scenario_names.push_back(s.name);
                ctx.scenario_hashes.push_back(sha256_hex(s.canonical));
                info->fn(ctx, s);
            }
        }
    }

    fs::create_directories(req.out_dir);
    RunSummary summary;
    ojson report;
    report["command"] = cmd;
    const std::string label =
        req.scenario.empty() && !ctx.scenario_names.empty() ? ctx.scenario_names.front() : req.scenario;
    report["scenario"] = label;
    report["scenarios"] = ctx.scenario_names;
    report["seed"] = seed_used;
    report["quick"] = req.quick;
    report["metrics"] = ctx.metrics;
    report["checks"] = ctx.checks;
    for (const auto& c : ctx.checks) {
        summary.checks.push_back({c["name"].get<std::string>(), c["passed"].get<bool>()});
        summary.all_passed = summary.all_passed && c["passed"].get<bool>();
    }
    report["all_passed"] = summary.all_passed;
    summary.report_json = report.dump(2) + "\n";

    const fs::path out(req.out_dir);
    write_text(out / "results.csv", ctx.table.str());
    write_text(out / "report.json", summary.report_json);
    ojson manifest;
    manifest["toolkit_version"] = JUMPHJB_VERSION;
    manifest["command"] = cmd;
    manifest["scenario"] = label;
    manifest["scenario_hashes"] = ojson::object();
    for (std::size_t i = 0; i < ctx.scenario_names.size(); ++i)
        manifest["scenario_hashes"][ctx.scenario_names[i]] = ctx.scenario_hashes[i];
    manifest["seed"] = seed_used;
    manifest["threads"] = thread_count();
    manifest["quick"] = req.quick;
    manifest["timings_ms"] = ctx.timings;
    manifest["outputs"] = {{"results.csv", sha256_file((out / "results.csv").string())},
                           {"report.json", sha256_file((out / "report.json").string())}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return summary;
}

}  // namespace jumphjb
