// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/bsde_solver.hpp"

#include "jumphjb/parallel.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace jumphjb {

BsdeSolution::BsdeSolution(std::size_t n_paths, std::size_t steps, Eigen::Index d, std::size_t atoms)
    : n_paths_(n_paths), steps_(steps), atoms_(atoms), d_(d) {
    y_.assign(n_paths * (steps + 1), 0.0);
    z_.assign(n_paths * steps * static_cast<std::size_t>(d), 0.0);
    k_.assign(n_paths * steps * atoms, 0.0);
    k_agg_.assign(n_paths * steps, 0.0);
    terminal_.assign(n_paths, 0.0);
    y_fn.resize(steps + 1);
    z_fn.assign(steps, std::vector<RegressionFunction>(static_cast<std::size_t>(d)));
    k_fn.assign(steps, std::vector<RegressionFunction>(atoms));
}

namespace {

Mat node_states(const PathBundle& b, std::size_t node) {
    Mat X(b.n(), static_cast<Eigen::Index>(b.n_paths()));
    for (std::size_t p = 0; p < b.n_paths(); ++p) X.col(static_cast<Eigen::Index>(p)) = b.state(p, node);
    return X;
}

}  // namespace

BsdeSolution solve(const CoefficientSet& cs, const MarkMeasure& mm, const PathBundle& bundle,
                   const BsdeOptions& options, const TerminalOverride& terminal) {
    const std::size_t P = bundle.n_paths();
    const std::size_t S = bundle.grid().steps();
    const Eigen::Index d = bundle.d();
    const std::size_t A = mm.size();
    const double dt = bundle.grid().dt();
    if (bundle.atoms() != A) fail(ErrorCode::InvalidArgument, "bundle and mark measure disagree on atoms");
    BsdeSolution sol(P, S, d, A);
    sol.picard = options.picard;

    std::vector<NoiseHistory> hist(P);
    for (std::size_t p = 0; p < P; ++p) bundle.history_at(p, S, hist[p]);
    parallel_for(P, [&](std::size_t p) {
        const Vec xT = bundle.state(p, S);
        const double v = terminal ? terminal(p, xT) : cs.terminal(xT, hist[p]);
        if (!std::isfinite(v)) fail(ErrorCode::BlowUp, "nonfinite terminal value on path " + std::to_string(p));
        sol.terminal(p) = v;
        sol.y(p, S) = v;
    });
    {
        Vec yT(static_cast<Eigen::Index>(P));
        for (std::size_t p = 0; p < P; ++p) yT(static_cast<Eigen::Index>(p)) = sol.terminal(p);
        try {
            const Regressor r(options.basis, node_states(bundle, S));
            sol.y_fn[S] = r.function(r.fit(yT));
        } catch (const Error&) {
            // the terminal fit is only a convenience representation
        }
    }

    Vec next(static_cast<Eigen::Index>(P)), target(static_cast<Eigen::Index>(P));
    // pathwise cost h(X_T) + sum f dt; its spread is the Monte Carlo error of Y(0)
    Vec pathwise(static_cast<Eigen::Index>(P));
    for (std::size_t p = 0; p < P; ++p) pathwise(static_cast<Eigen::Index>(p)) = sol.terminal(p);
    std::vector<std::vector<int>> counts(P);
    std::vector<double> lw(A);
    for (std::size_t i = S; i-- > 0;) {
        const double t = bundle.grid().node(i);
        for (std::size_t p = 0; p < P; ++p) {
            next(static_cast<Eigen::Index>(p)) = sol.y(p, i + 1);
            bundle.jump_counts(p, i, counts[p]);
            // roll the history back to node i
            NoiseHistory& h = hist[p];
            h.t = t;
            h.brownian -= bundle.brownian(p, i);
            for (std::size_t a = 0; a < A; ++a) h.counts[a] -= counts[p][a];
        }
        std::optional<Regressor> reg;
        try {
            reg.emplace(options.basis, node_states(bundle, i));
        } catch (const Error& e) {
            std::ostringstream os;
            os << "step " << i << ": " << e.what();
            fail(e.code(), os.str());
        }
        auto fit_predict = [&](const Vec& tgt) {
            try {
                const Vec c = reg->fit(tgt);
                return std::pair<Vec, Vec>{c, reg->predict(c)};
            } catch (const Error& e) {
                std::ostringstream os;
                os << "step " << i << ": " << e.what();
                fail(e.code(), os.str());
            }
        };

        const Vec centred = next - fit_predict(next).second;
        std::optional<Regressor> fold[2];
        std::vector<std::size_t> members[2];
        if (options.cross_fit && P >= 2) {
            for (std::size_t p = 0; p < P; ++p) members[p % 2].push_back(p);
            for (int f = 0; f < 2; ++f) {
                Mat xs(d, static_cast<Eigen::Index>(members[f].size()));
                for (std::size_t q = 0; q < members[f].size(); ++q)
                    xs.col(static_cast<Eigen::Index>(q)) = bundle.state(members[f][q], i);
                try {
                    fold[f].emplace(options.basis, xs);
                } catch (const Error& e) {
                    std::ostringstream os;
                    os << "step " << i << " (cross-fit): " << e.what();
                    fail(e.code(), os.str());
                }
            }
        }
        // Full-sample function for later evaluation, plus per-path values.
        auto fit_component = [&](RegressionFunction& fn, auto&& store) {
            const auto [coef, hat] = fit_predict(target);
            fn = reg->function(coef);
            if (!fold[0]) {
                for (std::size_t p = 0; p < P; ++p) store(p, hat(static_cast<Eigen::Index>(p)));
                return;
            }
            for (int f = 0; f < 2; ++f) {
                Vec sub(static_cast<Eigen::Index>(members[f].size()));
                for (std::size_t q = 0; q < members[f].size(); ++q)
                    sub(static_cast<Eigen::Index>(q)) = target(static_cast<Eigen::Index>(members[f][q]));
                RegressionFunction other;
                try {
                    other = fold[f]->function(fold[f]->fit(sub));
                } catch (const Error& e) {
                    std::ostringstream os;
                    os << "step " << i << " (cross-fit): " << e.what();
                    fail(e.code(), os.str());
                }
                const auto& apply_to = members[1 - f];
                parallel_for(apply_to.size(), [&](std::size_t q) {
                    store(apply_to[q], other(bundle.state(apply_to[q], i)));
                });
            }
        };
        for (Eigen::Index j = 0; j < d; ++j) {
            for (std::size_t p = 0; p < P; ++p)
                target(static_cast<Eigen::Index>(p)) =
                    centred(static_cast<Eigen::Index>(p)) * bundle.brownian(p, i)(j) / dt;
            fit_component(sol.z_fn[i][static_cast<std::size_t>(j)],
                          [&](std::size_t p, double v) { sol.z(p, i)(j) = v; });
        }
        for (std::size_t a = 0; a < A; ++a) {
            const Atom& atom = mm.atom(a);
            lw[a] = cs.jump_weight(t, atom.mark);
            if (atom.weight == 0.0) continue;
            const double comp = atom.weight * dt;
            for (std::size_t p = 0; p < P; ++p)
                target(static_cast<Eigen::Index>(p)) =
                    centred(static_cast<Eigen::Index>(p)) * (static_cast<double>(counts[p][a]) - comp) / comp;
            fit_component(sol.k_fn[i][a], [&](std::size_t p, double v) { sol.k(p, i, a) = v; });
        }
        for (std::size_t p = 0; p < P; ++p) {
            double agg = 0.0;
            for (std::size_t a = 0; a < A; ++a) agg += mm.atom(a).weight * lw[a] * sol.k(p, i, a);
            sol.k_agg(p, i) = agg;
        }

        auto assemble = [&](bool use_current) {
            parallel_for(P, [&](std::size_t p) {
                const Vec x = bundle.state(p, i);
                const Vec u = bundle.control(p, i);
                const double yin = use_current ? sol.y(p, i) : next(static_cast<Eigen::Index>(p));
                const double f = cs.generator(t, x, u, yin, sol.z(p, i), sol.k_agg(p, i), hist[p]);
                target(static_cast<Eigen::Index>(p)) = next(static_cast<Eigen::Index>(p)) + f * dt;
            });
            if (!target.allFinite()) {
                std::ostringstream os;
                os << "nonfinite generator value at step " << i;
                fail(ErrorCode::BlowUp, os.str());
            }
            auto [coef, yhat] = fit_predict(target);
            for (std::size_t p = 0; p < P; ++p) sol.y(p, i) = yhat(static_cast<Eigen::Index>(p));
            sol.y_fn[i] = reg->function(coef);
        };
        assemble(false);
        if (options.picard) assemble(true);
        pathwise += target - next;

        if (i == 0) {
            const MeanSe ms = mean_se(pathwise);
            double mean_y = 0.0;
            for (std::size_t p = 0; p < P; ++p) mean_y += sol.y(p, 0);
            sol.y0 = mean_y / static_cast<double>(P);
            sol.y0_se = ms.se;
        }
    }
    return sol;
}

CostEstimate recursive_cost(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                            const Policy& policy, const BsdeOptions& options, std::size_t n_paths,
                            const SeedSequence& seeds) {
    const PathBundle bundle = simulate(cs, mm, grid, {x0}, policy, n_paths, seeds);
    const BsdeSolution sol = solve(cs, mm, bundle, options);
    return {sol.y0, sol.y0_se};
}

CostEstimate backward_semigroup(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& segment,
                                const Vec& x0, const Policy& policy,
                                const std::function<double(const Vec&)>& terminal_field,
                                const BsdeOptions& options, std::size_t n_paths, const SeedSequence& seeds) {
    if (!terminal_field) fail(ErrorCode::InvalidArgument, "backward_semigroup needs a terminal field");
    const PathBundle bundle = simulate(cs, mm, segment, {x0}, policy, n_paths, seeds);
    const BsdeSolution sol =
        solve(cs, mm, bundle, options, [&](std::size_t, const Vec& x) { return terminal_field(x); });
    return {sol.y0, sol.y0_se};
}

ResidualTable martingale_residuals(const CoefficientSet& cs, const MarkMeasure& mm, const PathBundle& bundle,
                                   const BsdeSolution& sol) {
    const std::size_t P = bundle.n_paths();
    const std::size_t S = bundle.grid().steps();
    const double dt = bundle.grid().dt();
    if (sol.steps() != S || sol.n_paths() != P) fail(ErrorCode::InvalidArgument, "solution does not match the bundle");
    ResidualTable out;
    out.mean.resize(S);
    out.se.resize(S);
    std::vector<int> counts;
    NoiseHistory h;
    Vec r(static_cast<Eigen::Index>(P)), m(static_cast<Eigen::Index>(P));
    for (std::size_t i = 0; i < S; ++i) {
        const double t = bundle.grid().node(i);
        for (std::size_t p = 0; p < P; ++p) {
            bundle.history_at(p, i, h);
            bundle.jump_counts(p, i, counts);
            const double yin = sol.picard ? sol.y(p, i) : sol.y(p, i + 1);
            const double f = cs.generator(t, bundle.state(p, i), bundle.control(p, i), yin, sol.z(p, i),
                                          sol.k_agg(p, i), h);
            double jump = 0.0;
            for (std::size_t a = 0; a < mm.size(); ++a)
                jump += sol.k(p, i, a) * (static_cast<double>(counts[a]) - mm.atom(a).weight * dt);
            m(static_cast<Eigen::Index>(p)) = sol.z(p, i).dot(bundle.brownian(p, i)) + jump;
            r(static_cast<Eigen::Index>(p)) = sol.y(p, i + 1) - sol.y(p, i) + f * dt - m(static_cast<Eigen::Index>(p));
        }
        out.mean[i] = r.mean();
        out.se[i] = sol.regression_pinned ? mean_se(m).se : mean_se(r).se;
    }
    return out;
}

AprioriReport apriori_report(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                             const Policy& policy, const BsdeOptions& options, std::size_t n_paths,
                             const SeedSequence& seeds, double perturbation) {
    AprioriReport r;
    const double p = cs.p;
    const PathBundle base = simulate(cs, mm, grid, {x0}, policy, n_paths, seeds);
    const BsdeSolution sol = solve(cs, mm, base, options);
    r.y0 = sol.y0;
    for (std::size_t i = 0; i <= grid.steps(); ++i) {
        double acc = 0.0;
        for (std::size_t q = 0; q < sol.n_paths(); ++q) acc += sol.y(q, i) * sol.y(q, i);
        r.sup_second_moment = std::max(r.sup_second_moment, acc / static_cast<double>(sol.n_paths()));
    }
    const double w0 = 1.0 + std::pow(x0.norm(), p);
    r.envelope_constant = std::abs(r.y0) / w0;

    const Vec x2 = 2.0 * x0;
    r.y0_doubled = recursive_cost(cs, mm, grid, x2, policy, options, n_paths, seeds).value;
    const double w2 = 1.0 + std::pow(x2.norm(), p);
    const double c2 = std::abs(r.y0_doubled) / w2;
    const double tiny = 1e-300;
    r.growth_factor = std::abs(r.y0) > tiny ? std::abs(r.y0_doubled) / std::abs(r.y0) : 0.0;
    const double c_fit = std::max(r.envelope_constant, c2);
    r.growth_bound = r.envelope_constant > tiny ? (c_fit / r.envelope_constant) * w2 / w0 : 0.0;

    Vec xp = x0;
    xp.array() += perturbation / std::sqrt(static_cast<double>(x0.size()));
    r.y0_perturbed = recursive_cost(cs, mm, grid, xp, policy, options, n_paths, seeds).value;
    const double dx = (xp - x0).norm();
    const double wt = 1.0 + std::pow(x0.norm(), p - 1.0) + std::pow(xp.norm(), p - 1.0);
    r.stability_constant = std::abs(r.y0_perturbed - r.y0) / (wt * dx);
    return r;
}

}  // namespace jumphjb
