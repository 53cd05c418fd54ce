// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace jumphjb {

const NoiseHistory& NoiseHistory::none() {
    static const NoiseHistory empty{};
    return empty;
}

void CoefficientSet::validate() const {
    if (!drift || !diffusion || !jump || !generator || !terminal || !jump_weight)
        fail(ErrorCode::InvalidInstance, "coefficient set has an unset callback");
    if (n < 1 || d < 1 || k < 1) fail(ErrorCode::InvalidInstance, "dimensions must be positive");
    if (p < 2.0) fail(ErrorCode::InvalidInstance, "growth exponent p must be >= 2");
    if (controls.empty()) fail(ErrorCode::InvalidInstance, "control set is empty");
    for (const Vec& u : controls)
        if (u.size() != k) fail(ErrorCode::InvalidInstance, "control point has wrong dimension");
}

double hamiltonian(const CoefficientSet& cs, double t, const Vec& x, const Vec& u, double y, const Vec& p_grad,
                   const Vec& q, const Mat& Q, const Mat& A, double k_agg, const NoiseHistory& hist) {
    if (x.size() != cs.n || p_grad.size() != cs.n || q.size() != cs.d || Q.rows() != cs.n || Q.cols() != cs.d ||
        A.rows() != cs.n || A.cols() != cs.n || u.size() != cs.k) {
        std::ostringstream os;
        os << "hamiltonian: dimension mismatch (n=" << cs.n << ", d=" << cs.d << ", k=" << cs.k << ")";
        fail(ErrorCode::InvalidInstance, os.str());
    }
    const Vec b = cs.drift(t, x, u, hist);
    const Mat sigma = cs.diffusion(t, x, u, hist);
    const Vec z = sigma.transpose() * p_grad + q;
    return cs.generator(t, x, u, y, z, k_agg, hist) + p_grad.dot(b) + (Q * sigma.transpose()).trace() +
           0.5 * (A * sigma * sigma.transpose()).trace();
}

double nonlocal_I(const CoefficientSet& cs, const ScalarField& phi, double t, const Vec& mark, const Vec& x,
                  const Vec& u, const NoiseHistory& hist) {
    const Vec g = cs.jump(t, mark, x, u, hist);
    return phi.value(t, x + g) - phi.value(t, x);
}

double nonlocal_L(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                  const ScalarField& phi, const MarkField& psi, const NoiseHistory& hist) {
    const double base = phi.value(t, x);
    return mm.quadrature([&](std::size_t i) {
        const Atom& a = mm.atom(i);
        const Vec displaced = x + cs.jump(t, a.mark, x, u, hist);
        return (phi.value(t, displaced) - base + psi.value(t, i, displaced)) * cs.jump_weight(t, a.mark);
    });
}

namespace {

// Per-point data shared by every control in the minimization.
struct FieldJet {
    double y;
    Vec grad;
    Mat hess;
    Vec z;
    Mat dz;
};

double drift_from_jet(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                      const FieldJet& jet, const ScalarField& V, const MarkField& K, const NoiseHistory& hist) {
    double k_agg = 0.0;
    double jump_integral = 0.0;
    for (std::size_t i = 0; i < mm.size(); ++i) {
        const Atom& a = mm.atom(i);
        if (a.weight == 0.0) continue;
        const Vec g = cs.jump(t, a.mark, x, u, hist);
        const Vec displaced = x + g;
        const double v_disp = V.value(t, displaced);
        const double k_disp = K.value(t, i, displaced);
        const double i_v = v_disp - jet.y;
        k_agg += a.weight * (i_v + k_disp) * cs.jump_weight(t, a.mark);
        jump_integral += a.weight * (i_v - g.dot(jet.grad) + (k_disp - K.value(t, i, x)));
    }
    return hamiltonian(cs, t, x, u, jet.y, jet.grad, jet.z, jet.dz, jet.hess, k_agg, hist) + jump_integral;
}

FieldJet make_jet(double t, const Vec& x, const ScalarField& V, const VectorField& Z) {
    return FieldJet{V.value(t, x), V.gradient(t, x), V.hessian(t, x), Z.value(t, x), Z.jacobian(t, x)};
}

}  // namespace

double drift_at_control(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                        const ScalarField& V, const VectorField& Z, const MarkField& K, const NoiseHistory& hist) {
    return drift_from_jet(cs, mm, t, x, u, make_jet(t, x, V, Z), V, K, hist);
}

DriftValue drift_F(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const ScalarField& V,
                   const VectorField& Z, const MarkField& K, const NoiseHistory& hist) {
    if (cs.controls.empty()) fail(ErrorCode::InvalidInstance, "drift_F: empty control set");
    const FieldJet jet = make_jet(t, x, V, Z);
    DriftValue out;
    out.per_control.reserve(cs.controls.size());
    out.value = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cs.controls.size(); ++j) {
        const double v = drift_from_jet(cs, mm, t, x, cs.controls[j], jet, V, K, hist);
        out.per_control.push_back(v);
        if (v < out.value) {
            out.value = v;
            out.argmin = j;
        }
    }
    return out;
}

DriftValue test_field_F(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x,
                        const TestField& tf, const NoiseHistory& hist) {
    if (!tf.phi || !tf.beta || !tf.gamma) fail(ErrorCode::InvalidArgument, "test field is incomplete");
    return drift_F(cs, mm, t, x, *tf.phi, *tf.beta, *tf.gamma, hist);
}

double generator_L(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                   const ScalarField& phi, const NoiseHistory& hist) {
    const Vec b = cs.drift(t, x, u, hist);
    const Mat sigma = cs.diffusion(t, x, u, hist);
    const double base = phi.value(t, x);
    const Vec grad = phi.gradient(t, x);
    const Mat hess = phi.hessian(t, x);
    double out = b.dot(grad) + 0.5 * (sigma * sigma.transpose() * hess).trace();
    out += mm.quadrature([&](std::size_t i) {
        const Vec g = cs.jump(t, mm.atom(i).mark, x, u, hist);
        return phi.value(t, x + g) - base - g.dot(grad);
    });
    return out;
}

// ---------------------------------------------------------------------------

AssumptionReport probe_assumptions(const CoefficientSet& cs, const MarkMeasure& mm, const ProbeSpec& spec,
                                   Rng& rng) {
    if (spec.samples == 0 || spec.times.empty() || spec.lower.size() != cs.n || spec.upper.size() != cs.n)
        fail(ErrorCode::InvalidArgument, "probe grid is empty or has the wrong dimension");
    const NoiseHistory& hist = NoiseHistory::none();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, cs.controls.size() - 1);

    struct Sample {
        Vec x;
        Vec u;
    };
    std::vector<Sample> samples;
    samples.reserve(spec.samples);
    for (std::size_t i = 0; i < spec.samples; ++i) {
        Vec x(cs.n);
        for (Eigen::Index j = 0; j < cs.n; ++j) x(j) = spec.lower(j) + unif(rng) * (spec.upper(j) - spec.lower(j));
        samples.push_back({std::move(x), cs.controls[pick(rng)]});
    }

    AssumptionReport r;
    r.exp_integrability = mm.exp_integrability();
    const double p = cs.p;
    auto upd = [](double& slot, double v) { slot = std::max(slot, v); };
    constexpr double kTiny = 1e-14;

    for (double t : spec.times) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Sample& a = samples[i];
            const Vec b_a = cs.drift(t, a.x, a.u, hist);
            const Mat s_a = cs.diffusion(t, a.x, a.u, hist);
            const double scale_a = 1.0 + a.x.norm() + a.u.norm();
            upd(r.growth_drift_diffusion, (b_a.norm() + s_a.norm()) / scale_a);
            for (std::size_t e = 0; e < mm.size(); ++e) {
                const Atom& atom = mm.atom(e);
                const double g = cs.jump(t, atom.mark, a.x, a.u, hist).norm();
                if (atom.rho > 0.0)
                    upd(r.growth_jump, g / (atom.rho * scale_a));
                else if (g > kTiny)
                    r.growth_jump = std::numeric_limits<double>::infinity();
                upd(r.weight_ratio, cs.jump_weight(t, atom.mark) / (1.0 + atom.mark.norm()));
            }
            const double h_a = cs.terminal(a.x, hist);
            upd(r.growth_terminal, std::abs(h_a) / (1.0 + std::pow(a.x.norm(), p)));

            for (double s : spec.backward_scale) {
                const double y = s * (2.0 * unif(rng) - 1.0);
                Vec z(cs.d);
                for (Eigen::Index j = 0; j < cs.d; ++j) z(j) = s * (2.0 * unif(rng) - 1.0);
                const double kk = s * (2.0 * unif(rng) - 1.0);
                const double f_zero = cs.generator(t, a.x, a.u, 0.0, Vec::Zero(cs.d), 0.0, hist);
                upd(r.growth_generator,
                    std::abs(f_zero) / (1.0 + std::pow(a.x.norm(), p) + std::pow(a.u.norm(), p)));
                const double f1 = cs.generator(t, a.x, a.u, y, z, kk, hist);
                // backward-variable Lipschitz ratio against a perturbed tuple
                const double y2 = y + s * (unif(rng) - 0.5);
                Vec z2 = z;
                for (Eigen::Index j = 0; j < cs.d; ++j) z2(j) += s * (unif(rng) - 0.5);
                const double k2 = kk + s * (unif(rng) - 0.5);
                const double f2 = cs.generator(t, a.x, a.u, y2, z2, k2, hist);
                const double den = std::abs(y2 - y) + (z2 - z).norm() + std::abs(k2 - kk);
                if (den > kTiny) upd(r.lipschitz_generator_yzk, std::abs(f2 - f1) / den);
                // monotonicity in the aggregated jump slot
                const double f_up = cs.generator(t, a.x, a.u, y, z, kk + std::abs(s) + 1.0, hist);
                if (f_up < f1 - 1e-12 * (1.0 + std::abs(f1))) ++r.monotonicity_violations;
            }

            // pairs: neighbour in sample order, once with its own control and
            // once with the partner's control so both slots are exercised
            const Sample& other = samples[(i + 1) % samples.size()];
            for (int variant = 0; variant < 2; ++variant) {
                const Vec& ub = variant == 0 ? a.u : other.u;
                const Vec& xb = other.x;
                const double dxu = (a.x - xb).norm() + (a.u - ub).norm();
                if (dxu <= kTiny) continue;
                const Vec b_b = cs.drift(t, xb, ub, hist);
                const Mat s_b = cs.diffusion(t, xb, ub, hist);
                upd(r.lipschitz_drift, (b_a - b_b).norm() / dxu);
                upd(r.lipschitz_diffusion, (s_a - s_b).norm() / dxu);
                for (std::size_t e = 0; e < mm.size(); ++e) {
                    const Atom& atom = mm.atom(e);
                    const double dg =
                        (cs.jump(t, atom.mark, a.x, a.u, hist) - cs.jump(t, atom.mark, xb, ub, hist)).norm();
                    if (atom.rho > 0.0)
                        upd(r.lipschitz_jump, dg / (atom.rho * dxu));
                    else if (dg > kTiny)
                        r.lipschitz_jump = std::numeric_limits<double>::infinity();
                }
                const double pw = p - 1.0;
                const double wt = 1.0 + std::pow(a.x.norm(), pw) + std::pow(xb.norm(), pw) +
                                  std::pow(a.u.norm(), pw) + std::pow(ub.norm(), pw);
                const double fa = cs.generator(t, a.x, a.u, 0.0, Vec::Zero(cs.d), 0.0, hist);
                const double fb = cs.generator(t, xb, ub, 0.0, Vec::Zero(cs.d), 0.0, hist);
                upd(r.lipschitz_generator_xu, std::abs(fa - fb) / (wt * dxu));
                const double dx = (a.x - xb).norm();
                if (dx > kTiny) {
                    const double wh = 1.0 + std::pow(a.x.norm(), pw) + std::pow(xb.norm(), pw);
                    upd(r.lipschitz_terminal, std::abs(h_a - cs.terminal(xb, hist)) / (wh * dx));
                }
            }
        }
    }

    auto flag = [&](const char* name, double v) {
        if (!(v <= spec.ratio_bound)) r.flags.emplace_back(name);
    };
    flag("lipschitz_drift", r.lipschitz_drift);
    flag("lipschitz_diffusion", r.lipschitz_diffusion);
    flag("lipschitz_jump", r.lipschitz_jump);
    flag("growth_drift_diffusion", r.growth_drift_diffusion);
    flag("growth_jump", r.growth_jump);
    flag("lipschitz_generator_xu", r.lipschitz_generator_xu);
    flag("lipschitz_generator_yzk", r.lipschitz_generator_yzk);
    flag("lipschitz_terminal", r.lipschitz_terminal);
    flag("growth_generator", r.growth_generator);
    flag("growth_terminal", r.growth_terminal);
    flag("weight_ratio", r.weight_ratio);
    if (r.monotonicity_violations > 0) r.flags.emplace_back("generator_not_monotone_in_k");
    return r;
}

}  // namespace jumphjb
