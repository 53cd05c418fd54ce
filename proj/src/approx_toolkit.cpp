// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/approx_toolkit.hpp"

#include "jumphjb/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <utility>

namespace jumphjb {

namespace {

struct Rule {
    Mat z;                  // n x Q, points inside the unit ball
    std::vector<double> w;  // normalized to sum 1
};

std::shared_ptr<const Rule> mollifier_rule(Eigen::Index n, int order) {
    static std::mutex mu;
    static std::map<std::pair<Eigen::Index, int>, std::shared_ptr<const Rule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({n, order});
    if (it != cache.end()) return it->second;

    if (n < 1) fail(ErrorCode::InvalidArgument, "mollifier dimension must be positive");
    if (order < 2) fail(ErrorCode::InvalidArgument, "quadrature order must be at least 2");
    const double total = std::pow(static_cast<double>(order), static_cast<double>(n));
    if (total > 4e6) fail(ErrorCode::InvalidArgument, "tensor quadrature too large for this dimension");

    std::vector<double> nodes, weights;
    gauss_legendre(order, nodes, weights);
    std::vector<Vec> pts;
    std::vector<double> ws;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    for (;;) {
        Vec z(n);
        double w = 1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            z(j) = nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
            w *= weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
        }
        const double r2 = z.squaredNorm();
        if (r2 < 1.0) {
            const double rho = std::exp(1.0 / (r2 - 1.0));
            if (rho * w > 0.0) {
                pts.push_back(z);
                ws.push_back(rho * w);
            }
        }
        Eigen::Index j = 0;
        while (j < n && ++idx[static_cast<std::size_t>(j)] == order) idx[static_cast<std::size_t>(j++)] = 0;
        if (j == n) break;
    }
    auto rule = std::make_shared<Rule>();
    rule->z.resize(n, static_cast<Eigen::Index>(pts.size()));
    const double mass = std::accumulate(ws.begin(), ws.end(), 0.0);
    for (std::size_t q = 0; q < pts.size(); ++q) {
        rule->z.col(static_cast<Eigen::Index>(q)) = pts[q];
        rule->w.push_back(ws[q] / mass);
    }
    cache[{n, order}] = rule;
    return rule;
}

void check_spec(const MollifierSpec& spec, const Vec& x) {
    if (spec.level < 1) fail(ErrorCode::InvalidArgument, "mollifier level must be >= 1");
    if (spec.dim != x.size()) fail(ErrorCode::InvalidArgument, "mollifier dimension does not match the point");
}

// sum_q w_q F(x - z_q / l); F returns something with += and scalar *.
template <class Acc, class F>
Acc convolve(const Rule& rule, int level, const Vec& x, Acc zero, F&& func) {
    const double inv = 1.0 / static_cast<double>(level);
    Acc acc = std::move(zero);
    Vec y(x.size());
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
        y = x - inv * rule.z.col(static_cast<Eigen::Index>(q));
        acc += rule.w[q] * func(y);
    }
    return acc;
}

double spectral_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct BackwardSample {
    double y;
    Vec z;
    double k;
};

std::vector<BackwardSample> backward_samples(Eigen::Index d) {
    std::vector<BackwardSample> out;
    const Vec z1 = Vec::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
    for (double y : {-1.0, 0.0, 1.0})
        for (int zi = 0; zi < 2; ++zi)
            for (double k : {-1.0, 0.0, 1.0}) out.push_back({y, zi == 0 ? Vec::Zero(d) : Vec(z1), k});
    return out;
}

}  // namespace

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    if (order < 1) fail(ErrorCode::InvalidArgument, "Gauss-Legendre order must be positive");
    // Golub-Welsch: eigenpairs of the symmetric Jacobi matrix
    Mat J = Mat::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k - 1, k) = b;
        J(k, k - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J);
    nodes.resize(static_cast<std::size_t>(order));
    weights.resize(static_cast<std::size_t>(order));
    for (int i = 0; i < order; ++i) {
        nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        weights[static_cast<std::size_t>(i)] = 2.0 * v * v;
    }
}

double mollify(const std::function<double(const Vec&)>& func, const MollifierSpec& spec, const Vec& x) {
    check_spec(spec, x);
    const auto rule = mollifier_rule(spec.dim, spec.order);
    return convolve(*rule, spec.level, x, 0.0, func);
}

Vec mollify_vec(const std::function<Vec(const Vec&)>& func, const MollifierSpec& spec, const Vec& x) {
    check_spec(spec, x);
    const auto rule = mollifier_rule(spec.dim, spec.order);
    const Vec probe = func(x);
    return convolve(*rule, spec.level, x, Vec(Vec::Zero(probe.size())), func);
}

Mat mollify_mat(const std::function<Mat(const Vec&)>& func, const MollifierSpec& spec, const Vec& x) {
    check_spec(spec, x);
    const auto rule = mollifier_rule(spec.dim, spec.order);
    const Mat probe = func(x);
    return convolve(*rule, spec.level, x, Mat(Mat::Zero(probe.rows(), probe.cols())), func);
}

CoefficientSet mollify_coefficients(const CoefficientSet& cs, const MollifierSpec& spec) {
    cs.validate();
    if (spec.level < 1) fail(ErrorCode::InvalidArgument, "mollifier level must be >= 1");
    if (spec.dim != cs.n) fail(ErrorCode::InvalidArgument, "mollifier dimension does not match the state");
    const auto rule = mollifier_rule(cs.n, spec.order);
    const int l = spec.level;
    CoefficientSet out = cs;
    out.drift = [b = cs.drift, rule, l, n = cs.n](double t, const Vec& x, const Vec& u, const NoiseHistory& h) {
        return convolve(*rule, l, x, Vec(Vec::Zero(n)), [&](const Vec& y) { return b(t, y, u, h); });
    };
    out.diffusion = [s = cs.diffusion, rule, l, n = cs.n, d = cs.d](double t, const Vec& x, const Vec& u,
                                                                  const NoiseHistory& h) {
        return convolve(*rule, l, x, Mat(Mat::Zero(n, d)), [&](const Vec& y) { return s(t, y, u, h); });
    };
    out.jump = [g = cs.jump, rule, l, n = cs.n](double t, const Vec& e, const Vec& x, const Vec& u,
                                               const NoiseHistory& h) {
        return convolve(*rule, l, x, Vec(Vec::Zero(n)), [&](const Vec& y) { return g(t, e, y, u, h); });
    };
    out.generator = [f = cs.generator, rule, l](double t, const Vec& x, const Vec& u, double y, const Vec& z,
                                               double k, const NoiseHistory& h) {
        return convolve(*rule, l, x, 0.0, [&](const Vec& xx) { return f(t, xx, u, y, z, k, h); });
    };
    out.terminal = [hf = cs.terminal, rule, l](const Vec& x, const NoiseHistory& h) {
        return convolve(*rule, l, x, 0.0, [&](const Vec& y) { return hf(y, h); });
    };
    return out;
}

CoefficientErrors coefficient_errors(const CoefficientSet& cs, const MarkMeasure& mm, const MollifierSpec& spec,
                                     const std::vector<Vec>& probe, const std::vector<double>& times) {
    if (probe.empty()) fail(ErrorCode::InvalidArgument, "probe grid is empty");
    const CoefficientSet ml = mollify_coefficients(cs, spec);
    const NoiseHistory& none = NoiseHistory::none();
    const auto samples = backward_samples(cs.d);
    const std::size_t P = probe.size();

    CoefficientErrors out;
    std::vector<double> dh(P);
    parallel_for(P, [&](std::size_t i) {
        const Vec& x = probe[i];
        dh[i] = std::abs(ml.terminal(x, none) - cs.terminal(x, none)) * weight_p(x, cs.p);
    });
    out.delta_h = *std::max_element(dh.begin(), dh.end());

    for (double t : times) {
        std::vector<double> df(P, 0.0), dl(P, 0.0);
        parallel_for(P, [&](std::size_t i) {
            const Vec& x = probe[i];
            const double w = weight_p(x, cs.p);
            for (const Vec& u : cs.controls) {
                for (const auto& s : samples)
                    df[i] = std::max(df[i], std::abs(ml.generator(t, x, u, s.y, s.z, s.k, none) -
                                                     cs.generator(t, x, u, s.y, s.z, s.k, none)) *
                                                w);
                double g2 = 0.0;
                for (std::size_t a = 0; a < mm.size(); ++a) {
                    const Vec& e = mm.atom(a).mark;
                    g2 += mm.atom(a).weight * (ml.jump(t, e, x, u, none) - cs.jump(t, e, x, u, none)).squaredNorm();
                }
                const double lam = (ml.drift(t, x, u, none) - cs.drift(t, x, u, none)).norm() +
                                   (ml.diffusion(t, x, u, none) - cs.diffusion(t, x, u, none)).norm() +
                                   std::sqrt(g2);
                dl[i] = std::max(dl[i], lam);
            }
        });
        out.delta_f.push_back(*std::max_element(df.begin(), df.end()));
        out.delta_lambda.push_back(*std::max_element(dl.begin(), dl.end()));
    }
    return out;
}

double empirical_lipschitz(const std::function<double(const Vec&)>& func,
                           const std::vector<std::pair<Vec, Vec>>& pairs) {
    double lip = 0.0;
    for (const auto& [a, b] : pairs) {
        const double dx = (a - b).norm();
        if (dx <= 0.0) continue;
        lip = std::max(lip, std::abs(func(a) - func(b)) / dx);
    }
    return lip;
}

std::vector<double> bounding_bsde(const BoundingInputs& in, const TimeGrid& grid) {
    const std::size_t S = grid.steps();
    if (in.delta_f.size() != S + 1 || in.delta_lambda.size() != S + 1)
        fail(ErrorCode::InvalidArgument, "driver series must have one value per grid node");
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    bool ok = nonneg(in.delta_h) && nonneg(in.c_v) && nonneg(in.l_y) && nonneg(in.c_phi);
    for (std::size_t i = 0; i <= S; ++i) ok = ok && nonneg(in.delta_f[i]) && nonneg(in.delta_lambda[i]);
    if (!ok) fail(ErrorCode::InvalidArgument, "bounding inputs must be finite and nonnegative");

    const double a = in.l_y + in.c_phi;
    const double dt = grid.dt();
    if (a * dt / 2.0 >= 1.0) fail(ErrorCode::StepTooLarge, "grid too coarse for the bounding ODE");
    std::vector<double> y(S + 1);
    y[S] = in.delta_h;
    for (std::size_t i = S; i-- > 0;) {
        const double di = in.delta_f[i] + in.c_v * in.delta_lambda[i];
        const double dn = in.delta_f[i + 1] + in.c_v * in.delta_lambda[i + 1];
        y[i] = (y[i + 1] * (1.0 + a * dt / 2.0) + dt / 2.0 * (di + dn)) / (1.0 - a * dt / 2.0);
    }
    return y;
}

EnvelopeIdentity envelope_identity(const BoundingInputs& in, const std::vector<double>& y, const TimeGrid& grid,
                                   const std::vector<double>& inverse_weights) {
    const std::size_t S = grid.steps();
    if (y.size() != S + 1) fail(ErrorCode::InvalidArgument, "Y must have one value per grid node");
    const double a = in.l_y + in.c_phi;
    const double dt = grid.dt();
    EnvelopeIdentity out;
    for (std::size_t i = 0; i < S; ++i) {
        const double di = in.delta_f[i] + in.c_v * in.delta_lambda[i];
        const double dn = in.delta_f[i + 1] + in.c_v * in.delta_lambda[i + 1];
        const double lhs = (y[i] - y[i + 1]) / dt;
        const double rhs = 0.5 * (di + a * y[i] + dn + a * y[i + 1]);
        const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
        out.ode = std::max(out.ode, std::abs(lhs - rhs) / scale);
    }
    // With deterministic drivers Z = K = 0; the Lipschitz terms are carried at
    // |Z| = |K| = Y only to exercise their sign cancellation.
    for (std::size_t i = 0; i <= S; ++i) {
        const double d = in.delta_f[i] + in.c_v * in.delta_lambda[i];
        const double zk = y[i] + y[i];
        for (double phi : inverse_weights) {
            const double env = (d + a * y[i] + zk) * phi;  // -ds of the envelope beyond -ds V
            const double lip_zk = zk * phi;                // F(.., Z, K) - F(.., 0, 0)
            const double coeff = d * phi;                  // [F_N - F] at V
            const double shift = a * y[i] * phi;           // F(V) - F(V + Y/w)
            const double total = env - lip_zk - coeff - shift;
            const double scale = std::max({1.0, std::abs(env), std::abs(lip_zk), std::abs(coeff), std::abs(shift)});
            out.cancellation = std::max(out.cancellation, std::abs(total) / scale);
        }
    }
    return out;
}

PenaltyValue penalty_chi(const Vec& x, const Vec& center, double p) {
    if (!(p >= 2.0)) fail(ErrorCode::InvalidArgument, "penalty exponent must be >= 2");
    if (x.size() != center.size()) fail(ErrorCode::InvalidArgument, "penalty center dimension mismatch");
    const Vec y = x - center;
    const double s = 1.0 + y.squaredNorm();
    PenaltyValue out;
    out.value = std::pow(s, (p + 2.0) / 2.0) - 1.0;
    const double g = (p + 2.0) * std::pow(s, p / 2.0);
    out.gradient = g * y;
    out.hessian = g * Mat::Identity(y.size(), y.size()) + (p + 2.0) * p * std::pow(s, p / 2.0 - 1.0) * y * y.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(out.hessian, Eigen::EigenvaluesOnly);
    out.hessian_min_eig = es.eigenvalues().minCoeff();
    out.lower_bound = g;
    out.bound_holds = out.hessian_min_eig >= out.lower_bound - 1e-8 * std::max(1.0, out.lower_bound);
    return out;
}

namespace {

// Visits every lattice point with its per-axis indices.
template <class F>
void for_lattice(const Vec& lower, const Vec& upper, std::size_t points, F&& visit) {
    const Eigen::Index n = lower.size();
    if (upper.size() != n || n == 0) fail(ErrorCode::InvalidArgument, "lattice box is malformed");
    if (points == 0) fail(ErrorCode::InvalidArgument, "lattice needs at least one point per axis");
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    Vec x(n);
    for (;;) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double s = points == 1 ? 0.5
                                         : static_cast<double>(idx[static_cast<std::size_t>(j)]) /
                                               static_cast<double>(points - 1);
            x(j) = lower(j) + s * (upper(j) - lower(j));
        }
        visit(x, idx);
        Eigen::Index j = 0;
        while (j < n && ++idx[static_cast<std::size_t>(j)] == points) idx[static_cast<std::size_t>(j++)] = 0;
        if (j == n) break;
    }
}

}  // namespace

std::vector<Vec> lattice(const Vec& lower, const Vec& upper, std::size_t points) {
    std::vector<Vec> out;
    for_lattice(lower, upper, points, [&](const Vec& x, const std::vector<std::size_t>&) { out.push_back(x); });
    return out;
}

PenaltyDomination penalty_domination(const std::function<double(const Vec&)>& field, const Vec& center, double p,
                                     double eps, const Vec& lower, const Vec& upper, std::size_t points) {
    PenaltyDomination out;
    out.max_value = -std::numeric_limits<double>::infinity();
    for_lattice(lower, upper, points, [&](const Vec& x, const std::vector<std::size_t>& idx) {
        const double v = field(x) - eps * penalty_chi(x, center, p).value;
        if (v > out.max_value) {
            out.max_value = v;
            out.argmax = x;
            out.interior = std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return i > 0 && i + 1 < points; });
        }
    });
    return out;
}

FunctionField lyapunov_phi(double p) {
    if (!(p >= 1.0)) fail(ErrorCode::InvalidArgument, "Lyapunov exponent must be >= 1");
    return FunctionField(
        [p](double, const Vec& x) { return 1.0 + std::pow(x.norm(), p); },
        [p](double, const Vec& x) -> Vec {
            const double r = x.norm();
            if (r == 0.0) return Vec::Zero(x.size());
            return p * std::pow(r, p - 2.0) * x;
        },
        [p](double, const Vec& x) -> Mat {
            const Eigen::Index n = x.size();
            const double r = x.norm();
            if (r == 0.0) return p == 2.0 ? Mat(2.0 * Mat::Identity(n, n)) : Mat(Mat::Zero(n, n));
            return p * std::pow(r, p - 2.0) * Mat::Identity(n, n) +
                   p * (p - 2.0) * std::pow(r, p - 4.0) * x * x.transpose();
        });
}

LyapunovReport lyapunov_check(const CoefficientSet& cs, const MarkMeasure& mm, double p,
                              const std::vector<Vec>& probe, double t) {
    if (probe.empty()) fail(ErrorCode::InvalidArgument, "probe grid is empty");
    const FunctionField phi = lyapunov_phi(p);
    const std::size_t P = probe.size();
    std::vector<double> ratio(P, -std::numeric_limits<double>::infinity());
    std::vector<double> weighted(P, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> bad(P, 0);
    parallel_for(P, [&](std::size_t i) {
        const Vec& x = probe[i];
        const double f = phi.value(t, x);
        const double deriv = phi.gradient(t, x).norm() + (1.0 + x.norm()) * spectral_norm(phi.hessian(t, x));
        for (const Vec& u : cs.controls) {
            double L = std::numeric_limits<double>::quiet_NaN();
            try {
                L = generator_L(cs, mm, t, x, u, phi);
            } catch (const Error&) {
            }
            if (!std::isfinite(L)) {
                ++bad[i];
                continue;
            }
            ratio[i] = std::max(ratio[i], L / f);
            weighted[i] = std::max(weighted[i], (deriv + L) / f);
        }
    });
    LyapunovReport out;
    out.probes = P;
    out.c_phi = -std::numeric_limits<double>::infinity();
    out.c_weighted = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < P; ++i) {
        out.nonfinite += bad[i];
        if (ratio[i] > out.c_phi) {
            out.c_phi = ratio[i];
            out.argmax = probe[i];
        }
        out.c_weighted = std::max(out.c_weighted, weighted[i]);
    }
    return out;
}

double generator_lipschitz_y(const CoefficientSet& cs, const std::vector<Vec>& probe,
                             const std::vector<double>& times) {
    const NoiseHistory& none = NoiseHistory::none();
    const auto samples = backward_samples(cs.d);
    double lip = 0.0;
    for (double t : times)
        for (const Vec& x : probe)
            for (const Vec& u : cs.controls)
                for (const auto& s : samples) {
                    if (s.y != -1.0) continue;
                    const double a = cs.generator(t, x, u, -1.0, s.z, s.k, none);
                    const double b = cs.generator(t, x, u, 1.0, s.z, s.k, none);
                    lip = std::max(lip, std::abs(b - a) / 2.0);
                }
    return lip;
}

double operator_constant(const GridField& V, const CoefficientSet& cs, const MarkMeasure& mm, double t,
                         const Vec& inner_lower, const Vec& inner_upper) {
    const NoiseHistory& none = NoiseHistory::none();
    auto inside = [&](const Vec& x) {
        return (x - inner_lower).minCoeff() >= -1e-12 && (inner_upper - x).minCoeff() >= -1e-12;
    };
    double s = 0.0;
    for (std::size_t i = 0; i < V.size(); ++i) {
        const Vec x = V.node(i);
        if (!inside(x)) continue;
        for (const Vec& u : cs.controls) s = std::max(s, cs.diffusion(t, x, u, none).norm() / (1.0 + x.norm()));
    }
    const double root_mass = std::sqrt(mm.total_mass());
    double c = 0.0;
    for (std::size_t i = 0; i < V.size(); ++i) {
        const Vec x = V.node(i);
        if (!inside(x)) continue;
        const double grad = V.gradient(t, x).norm();
        const double hess = spectral_norm(V.hessian(t, x));
        for (const Vec& u : cs.controls) {
            const double jump = mm.l2_norm([&](std::size_t a) {
                return V.gradient(t, Vec(x + cs.jump(t, mm.atom(a).mark, x, u, none))).norm();
            });
            c = std::max(c, weight_p(x, cs.p) * (grad * (1.0 + root_mass) + s * (1.0 + x.norm()) * hess + jump));
        }
    }
    return c;
}

SandwichReport envelope_sandwich(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                                 const PdeOptions& options, const std::vector<int>& levels, int order,
                                 const Vec& inner_lower, const Vec& inner_upper, std::size_t probe_points) {
    const NoiseHistory& none = NoiseHistory::none();
    const PdeSolution base =
        solve_pde(cs, mm, grid, options, [&](const Vec& x) { return cs.terminal(x, none); });
    PdeOptions fixed = options;
    fixed.time_steps = base.substeps * grid.steps();

    SandwichReport out;
    const std::vector<double> times = grid.nodes();
    for (std::size_t i = 0; i <= grid.steps(); ++i)
        out.c_v = std::max(out.c_v, operator_constant(base.fields[i], cs, mm, times[i], inner_lower, inner_upper));
    const std::vector<Vec> probe = lattice(options.lower, options.upper, probe_points);
    out.l_y = generator_lipschitz_y(cs, probe, {grid.t0()});
    double c_phi = 0.0;
    for (double t : times) c_phi = std::max(c_phi, lyapunov_check(cs, mm, cs.p, probe, t).c_phi);
    out.c_phi = c_phi;

    const GridField& shape = base.fields.front();
    for (int level : levels) {
        MollifierSpec spec{level, cs.n, order};
        SandwichLevel lv;
        lv.level = level;
        lv.errors = coefficient_errors(cs, mm, spec, probe, times);
        BoundingInputs in{lv.errors.delta_h, lv.errors.delta_f, lv.errors.delta_lambda, out.c_v, out.l_y, out.c_phi};
        const std::vector<double> y = bounding_bsde(in, grid);
        lv.y0 = y.front();
        const CoefficientSet ml = mollify_coefficients(cs, spec);
        const PdeSolution sol =
            solve_pde(ml, mm, grid, fixed, [&](const Vec& x) { return ml.terminal(x, none); });
        lv.min_slack = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i <= grid.steps(); ++i) {
            for (std::size_t j = 0; j < shape.size(); ++j) {
                const Vec x = shape.node(j);
                if ((x - inner_lower).minCoeff() < -1e-12 || (inner_upper - x).minCoeff() < -1e-12) continue;
                const double bound = y[i] / weight_p(x, cs.p);
                const double slack = bound - std::abs(sol.fields[i].values()[j] - base.fields[i].values()[j]);
                lv.min_slack = std::min(lv.min_slack, slack);
                if (slack < -1e-12 * std::max(1.0, bound)) ++lv.violations;  // equality holds at T
                if (i == 0) lv.width = std::max(lv.width, 2.0 * bound);
            }
        }
        out.levels.push_back(lv);
    }
    return out;
}

// ---------------------------------------------------------------------------

NoiseProjection::NoiseProjection(std::vector<std::size_t> interval_nodes, std::vector<std::vector<std::size_t>> groups,
                                 std::size_t n_paths, Eigen::Index d)
    : nodes_(std::move(interval_nodes)), groups_(std::move(groups)), n_paths_(n_paths), d_(d) {
    if (nodes_.size() < 2) fail(ErrorCode::InvalidArgument, "time partition needs at least one interval");
    for (std::size_t j = 1; j < nodes_.size(); ++j)
        if (nodes_[j] <= nodes_[j - 1]) fail(ErrorCode::InvalidArgument, "time partition must increase");
    if (groups_.empty()) fail(ErrorCode::InvalidArgument, "mark partition needs at least one group");
    brownian_.assign(n_paths_ * intervals() * static_cast<std::size_t>(d_), 0.0);
    counts_.assign(n_paths_ * intervals() * groups_.size(), 0);
}

double& NoiseProjection::brownian(std::size_t path, std::size_t interval, Eigen::Index j) {
    return brownian_[(path * intervals() + interval) * static_cast<std::size_t>(d_) + static_cast<std::size_t>(j)];
}
double NoiseProjection::brownian(std::size_t path, std::size_t interval, Eigen::Index j) const {
    return brownian_[(path * intervals() + interval) * static_cast<std::size_t>(d_) + static_cast<std::size_t>(j)];
}
int& NoiseProjection::count(std::size_t path, std::size_t interval, std::size_t group) {
    return counts_[(path * intervals() + interval) * groups_.size() + group];
}
int NoiseProjection::count(std::size_t path, std::size_t interval, std::size_t group) const {
    return counts_[(path * intervals() + interval) * groups_.size() + group];
}

Vec NoiseProjection::features(std::size_t path) const {
    const std::size_t N = intervals(), M = groups_.size(), d = static_cast<std::size_t>(d_);
    Vec f(static_cast<Eigen::Index>(N * (d + M)));
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < d_; ++j) f(k++) = brownian(path, i, j);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t g = 0; g < M; ++g) f(k++) = count(path, i, g);
    return f;
}

bool NoiseProjection::operator==(const NoiseProjection& o) const {
    return nodes_ == o.nodes_ && groups_ == o.groups_ && n_paths_ == o.n_paths_ && d_ == o.d_ &&
           brownian_ == o.brownian_ && counts_ == o.counts_;
}

NoiseProjection project_noise(const PathBundle& bundle, std::size_t n_intervals, std::size_t n_groups) {
    const std::size_t S = bundle.grid().steps();
    const std::size_t A = bundle.atoms();
    if (n_intervals < 1 || n_intervals > S)
        fail(ErrorCode::InvalidArgument, "time partition must have between 1 and steps intervals");
    if (n_groups < 1) fail(ErrorCode::InvalidArgument, "mark partition must have at least one group");

    std::vector<std::size_t> nodes(n_intervals + 1);
    for (std::size_t j = 0; j <= n_intervals; ++j)
        nodes[j] = static_cast<std::size_t>(
            std::llround(static_cast<double>(j) * static_cast<double>(S) / static_cast<double>(n_intervals)));
    const std::size_t M = A == 0 ? 1 : std::min(n_groups, A);
    std::vector<std::vector<std::size_t>> groups(M);
    std::vector<std::size_t> group_of(A);
    for (std::size_t g = 0; g < M; ++g) {
        const std::size_t lo = g * A / M, hi = (g + 1) * A / M;
        for (std::size_t a = lo; a < hi; ++a) {
            groups[g].push_back(a);
            group_of[a] = g;
        }
    }

    NoiseProjection out(nodes, groups, bundle.n_paths(), bundle.d());
    parallel_for(bundle.n_paths(), [&](std::size_t p) {
        std::vector<int> counts;
        for (std::size_t i = 0; i < n_intervals; ++i) {
            for (std::size_t s = nodes[i]; s < nodes[i + 1]; ++s) {
                const auto dw = bundle.brownian(p, s);
                for (Eigen::Index j = 0; j < bundle.d(); ++j) out.brownian(p, i, j) += dw(j);
                bundle.jump_counts(p, s, counts);
                for (std::size_t a = 0; a < A; ++a) out.count(p, i, group_of[a]) += counts[a];
            }
        }
    });
    return out;
}

namespace {

// Monomials of total degree <= degree as lists of feature indices.
void monomials(std::size_t q, int degree, std::size_t start, std::vector<std::size_t>& cur,
               std::vector<std::vector<std::size_t>>& out) {
    out.push_back(cur);
    if (static_cast<int>(cur.size()) == degree) return;
    for (std::size_t j = start; j < q; ++j) {
        cur.push_back(j);
        monomials(q, degree, j, cur, out);
        cur.pop_back();
    }
}

}  // namespace

std::vector<double> projection_error(const Vec& target, const std::vector<NoiseProjection>& projections,
                                     int degree) {
    if (degree < 1) fail(ErrorCode::InvalidArgument, "projection degree must be >= 1");
    std::vector<double> out;
    for (const NoiseProjection& proj : projections) {
        const std::size_t P = proj.n_paths();
        if (static_cast<std::size_t>(target.size()) != P)
            fail(ErrorCode::InvalidArgument, "target needs one value per projected path");
        const std::size_t q = proj.intervals() * (static_cast<std::size_t>(proj.d()) + proj.group_count());
        std::vector<std::vector<std::size_t>> mono;
        std::vector<std::size_t> cur;
        monomials(q, degree, 0, cur, mono);
        if (mono.size() >= P) fail(ErrorCode::IllConditionedBasis, "more basis functions than paths");

        Mat A(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(mono.size()));
        parallel_for(P, [&](std::size_t p) {
            const Vec f = proj.features(p);
            for (std::size_t m = 0; m < mono.size(); ++m) {
                double v = 1.0;
                for (std::size_t j : mono[m]) v *= f(static_cast<Eigen::Index>(j));
                A(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m)) = v;
            }
        });
        Eigen::ColPivHouseholderQR<Mat> qr(A);
        if (qr.rank() == 0) fail(ErrorCode::IllConditionedBasis, "projection design has rank zero");
        const Vec coef = qr.solve(target);
        const Vec r = target - A * coef;
        if (!r.allFinite()) fail(ErrorCode::IllConditionedBasis, "nonfinite projection residual");
        out.push_back(std::sqrt(r.squaredNorm() / static_cast<double>(P)));
    }
    return out;
}

double lattice_interpolate(const std::function<double(const std::vector<int>&)>& psi, const Vec& point) {
    const Eigen::Index k = point.size();
    if (k == 0) fail(ErrorCode::InvalidArgument, "empty lattice point");
    if (k > 20) fail(ErrorCode::InvalidArgument, "too many lattice coordinates");
    std::vector<int> base(static_cast<std::size_t>(k));
    std::vector<double> frac(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
        const double fl = std::floor(point(j));
        base[static_cast<std::size_t>(j)] = static_cast<int>(fl);
        frac[static_cast<std::size_t>(j)] = point(j) - fl;
    }
    double acc = 0.0;
    std::vector<int> corner(static_cast<std::size_t>(k));
    for (unsigned long mask = 0; mask < (1UL << k); ++mask) {
        double w = 1.0;
        for (Eigen::Index j = 0; j < k && w != 0.0; ++j) {
            const bool up = (mask >> j) & 1UL;
            const double fj = frac[static_cast<std::size_t>(j)];
            w *= up ? fj : 1.0 - fj;
            corner[static_cast<std::size_t>(j)] = base[static_cast<std::size_t>(j)] + (up ? 1 : 0);
        }
        if (w != 0.0) acc += w * psi(corner);
    }
    return acc;
}

}  // namespace jumphjb
