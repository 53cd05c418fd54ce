// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "jumphjb/coefficients.hpp"

#include <cmath>

using namespace jumphjb;

namespace {

CoefficientSet zero_set(Eigen::Index n, Eigen::Index d) {
    CoefficientSet cs;
    cs.n = n;
    cs.d = d;
    cs.k = 1;
    cs.drift = [n](double, const Vec&, const Vec&, const NoiseHistory&) { return Vec(Vec::Zero(n)); };
    cs.diffusion = [n, d](double, const Vec&, const Vec&, const NoiseHistory&) { return Mat(Mat::Zero(n, d)); };
    cs.jump = [n](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return Vec(Vec::Zero(n)); };
    cs.generator = [](double, const Vec&, const Vec&, double, const Vec&, double, const NoiseHistory&) { return 0.0; };
    cs.terminal = [](const Vec&, const NoiseHistory&) { return 0.0; };
    cs.jump_weight = [](double, const Vec&) { return 1.0; };
    cs.controls = {Vec::Zero(1)};
    return cs;
}

Vec v1(double a) { return Vec::Constant(1, a); }

// A small 2-D instance with every term active.
CoefficientSet rich_set() {
    CoefficientSet cs = zero_set(2, 2);
    cs.drift = [](double t, const Vec& x, const Vec& u, const NoiseHistory&) {
        Vec b(2);
        b << 0.3 * x(1) + u(0), -0.2 * x(0) + t;
        return b;
    };
    cs.diffusion = [](double, const Vec& x, const Vec& u, const NoiseHistory&) {
        Mat s(2, 2);
        s << 0.4 + 0.1 * x(0), 0.05, 0.1 * u(0), 0.3;
        return s;
    };
    cs.jump = [](double, const Vec& e, const Vec& x, const Vec&, const NoiseHistory&) {
        Vec g(2);
        g << e(0) * (1 + 0.1 * x(0)), 0.5 * e(0);
        return g;
    };
    cs.generator = [](double, const Vec& x, const Vec& u, double y, const Vec& z, double k, const NoiseHistory&) {
        return x.squaredNorm() + 0.5 * u(0) * u(0) - 0.1 * y + 0.2 * z(0) - 0.3 * z(1) + 0.7 * k;
    };
    cs.jump_weight = [](double, const Vec& e) { return 1.0 + 0.5 * std::abs(e(0)); };
    cs.controls = {v1(-1.0), v1(0.0), v1(1.0)};
    return cs;
}

MarkMeasure rich_measure() { return MarkMeasure({{v1(-0.5), 0.7, 0.5}, {v1(0.25), 1.3, 0.3}}); }

FunctionField quad_field() {
    return FunctionField([](double, const Vec& x) { return x(0) * x(0) + 0.5 * x(0) * x(1) - x(1); });
}

}  // namespace

TEST_CASE("hamiltonian reduces to f and to the transport term") {
    CoefficientSet cs = rich_set();
    const Vec x = Vec::Constant(2, 0.3), u = v1(1.0), q = Vec::Constant(2, 0.2);
    const Mat Z0 = Mat::Zero(2, 2);
    CHECK(hamiltonian(cs, 0.1, x, u, 0.4, Vec::Zero(2), q, Z0, Z0, 0.6) ==
          doctest::Approx(cs.generator(0.1, x, u, 0.4, q, 0.6, NoiseHistory::none())));

    CoefficientSet ones = zero_set(3, 1);
    ones.drift = [](double, const Vec&, const Vec&, const NoiseHistory&) { return Vec(Vec::Ones(3)); };
    ones.diffusion = [](double, const Vec&, const Vec&, const NoiseHistory&) { return Mat(Mat::Ones(3, 1)); };
    CHECK(hamiltonian(ones, 0.0, Vec::Zero(3), Vec::Zero(1), 0.0, Vec::Ones(3), Vec::Zero(1), Mat::Zero(3, 1),
                      Mat::Zero(3, 3), 0.0) == doctest::Approx(3.0));
}

TEST_CASE("hamiltonian matches term-by-term evaluation") {
    CoefficientSet cs = rich_set();
    Rng rng(3);
    std::normal_distribution<double> N;
    for (int rep = 0; rep < 20; ++rep) {
        Vec x(2), p(2), q(2);
        Mat Q(2, 2), A(2, 2);
        for (int i = 0; i < 2; ++i) {
            x(i) = N(rng);
            p(i) = N(rng);
            q(i) = N(rng);
            for (int j = 0; j < 2; ++j) {
                Q(i, j) = N(rng);
                A(i, j) = N(rng);
            }
        }
        const Vec u = v1(N(rng));
        const double y = N(rng), k = N(rng), t = 0.3;
        // explicit sums, no matrix products
        const Vec b = cs.drift(t, x, u, NoiseHistory::none());
        const Mat s = cs.diffusion(t, x, u, NoiseHistory::none());
        Vec z(2);
        for (int j = 0; j < 2; ++j) z(j) = s(0, j) * p(0) + s(1, j) * p(1) + q(j);
        double tr_q = 0.0, tr_a = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                tr_q += Q(i, j) * s(i, j);
                double ss = 0.0;
                for (int m = 0; m < 2; ++m) ss += s(j, m) * s(i, m);
                tr_a += A(i, j) * ss;
            }
        const double expect =
            cs.generator(t, x, u, y, z, k, NoiseHistory::none()) + p(0) * b(0) + p(1) * b(1) + tr_q + 0.5 * tr_a;
        CHECK(hamiltonian(cs, t, x, u, y, p, q, Q, A, k) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK_THROWS_AS(hamiltonian(cs, 0.0, Vec::Zero(3), v1(0), 0, Vec::Zero(2), Vec::Zero(2), Mat::Zero(2, 2),
                                Mat::Zero(2, 2), 0),
                    Error);
}

TEST_CASE("hamiltonian is affine in (p, Q, A)") {
    CoefficientSet cs = rich_set();
    cs.generator = [](double, const Vec& x, const Vec&, double y, const Vec&, double k, const NoiseHistory&) {
        return x.sum() + y * y + k;  // independent of z
    };
    const Vec x = Vec::Constant(2, 0.7), u = v1(-1.0), q = Vec::Zero(2);
    Rng rng(5);
    std::normal_distribution<double> N;
    auto rnd = [&](Eigen::Index r, Eigen::Index c) {
        Mat m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = N(rng);
        return m;
    };
    const Vec p0 = rnd(2, 1), dp = rnd(2, 1);
    const Mat Q0 = rnd(2, 2), dQ = rnd(2, 2), A0 = rnd(2, 2), dA = rnd(2, 2);
    auto H = [&](double s) { return hamiltonian(cs, 0.0, x, u, 0.2, p0 + s * dp, q, Q0 + s * dQ, A0 + s * dA, 0.1); };
    CHECK(H(0.5) - 0.5 * (H(0.0) + H(1.0)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(H(2.0) - (2.0 * H(1.0) - H(0.0)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("nonlocal I and L") {
    CoefficientSet cs = rich_set();
    const MarkMeasure mm = rich_measure();
    const Vec x = Vec::Constant(2, 0.2), u = v1(0.0);
    const Vec c = (Vec(2) << 1.5, -0.5).finished();
    FunctionField lin([&](double, const Vec& y) { return c.dot(y); });
    const Vec g = cs.jump(0.0, mm.atom(0).mark, x, u, NoiseHistory::none());
    CHECK(nonlocal_I(cs, lin, 0.0, mm.atom(0).mark, x, u) == doctest::Approx(c.dot(g)));

    FunctionField sq([](double, const Vec& y) { return y.squaredNorm(); });
    CoefficientSet shift = zero_set(2, 2);
    const Vec v = (Vec(2) << 0.3, -0.4).finished();
    shift.jump = [v](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return v; };
    CHECK(nonlocal_I(shift, sq, 0.0, v1(0), Vec::Zero(2), u) == doctest::Approx(v.squaredNorm()));
    CHECK(nonlocal_I(zero_set(2, 2), sq, 0.0, v1(0), x, u) == 0.0);

    ConstantField zero(0.0);
    ZeroMarkField zk;
    CHECK(nonlocal_L(cs, mm, 0.0, x, u, zero, zk) == 0.0);
    CoefficientSet unweighted = cs;
    unweighted.jump_weight = [](double, const Vec&) { return 0.0; };
    const FunctionField q = quad_field();
    FunctionMarkField psi([](double, std::size_t i, const Vec& y) { return (i + 1.0) * y(1); });
    CHECK(nonlocal_L(unweighted, mm, 0.0, x, u, q, psi) == 0.0);

    MarkMeasure single({{v1(0.4), 2.5, 0.4}});
    const Vec gs = cs.jump(0.0, v1(0.4), x, u, NoiseHistory::none());
    const double expect = 2.5 * (1.0 + 0.5 * 0.4) * (q.value(0, x + gs) - q.value(0, x) + 1.0 * (x + gs)(1));
    CHECK(nonlocal_L(cs, single, 0.0, x, u, q, psi) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("drift operator") {
    const MarkMeasure mm = rich_measure();
    ConstantField c(3.0);
    ZeroVectorField z2(2);
    ZeroMarkField zk;
    CoefficientSet zero = zero_set(2, 2);
    CHECK(drift_F(zero, mm, 0.0, Vec::Constant(2, 0.5), c, z2, zk).value == doctest::Approx(0.0).scale(1.0));

    CoefficientSet cs = rich_set();
    const FunctionField V = quad_field();
    FunctionVectorField Z(2, [](double, const Vec& x) { return Vec((Vec(2) << x(0), 0.2).finished()); });
    FunctionMarkField K([](double, std::size_t i, const Vec& x) { return 0.1 * (i + 1.0) * x(0); });
    const Vec x = (Vec(2) << 0.4, -0.3).finished();

    // oracle: re-sum every term at each control separately
    std::vector<double> per;
    for (const Vec& u : cs.controls) {
        const double y = V.value(0, x);
        const Vec grad = V.gradient(0, x);
        const Mat hess = V.hessian(0, x);
        double kagg = 0.0, jumps = 0.0;
        for (std::size_t i = 0; i < mm.size(); ++i) {
            const Vec g = cs.jump(0, mm.atom(i).mark, x, u, NoiseHistory::none());
            const double iv = V.value(0, x + g) - y;
            kagg += mm.atom(i).weight * cs.jump_weight(0, mm.atom(i).mark) * (iv + K.value(0, i, x + g));
            jumps += mm.atom(i).weight * (iv - g.dot(grad) + K.value(0, i, x + g) - K.value(0, i, x));
        }
        per.push_back(hamiltonian(cs, 0, x, u, y, grad, Z.value(0, x), Z.jacobian(0, x), hess, kagg) + jumps);
    }
    const DriftValue dv = drift_F(cs, mm, 0.0, x, V, Z, K);
    REQUIRE(dv.per_control.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(dv.per_control[j] == doctest::Approx(per[j]).epsilon(1e-10));
    CHECK(dv.value == doctest::Approx(*std::min_element(per.begin(), per.end())));

    CoefficientSet single = cs;
    single.controls = {cs.controls[1]};
    CHECK(drift_F(single, mm, 0.0, x, V, Z, K).value ==
          doctest::Approx(drift_at_control(cs, mm, 0.0, x, cs.controls[1], V, Z, K)));
    // enlarging the control set never increases the value
    CHECK(dv.value <= drift_F(single, mm, 0.0, x, V, Z, K).value);

    CoefficientSet none = cs;
    none.controls.clear();
    CHECK_THROWS_AS(drift_F(none, mm, 0.0, x, V, Z, K), Error);
}

TEST_CASE("drift ties break toward the lowest index") {
    CoefficientSet cs = zero_set(1, 1);
    cs.controls = {v1(1.0), v1(2.0), v1(1.0)};
    ConstantField V(1.0);
    ZeroVectorField Z(1);
    ZeroMarkField K;
    CHECK(drift_F(cs, MarkMeasure(), 0.0, v1(0.0), V, Z, K).argmin == 0);
}

TEST_CASE("test-field operator") {
    const MarkMeasure mm = rich_measure();
    ConstantField zero(0.0);
    ZeroVectorField zb(2);
    ZeroMarkField zg;
    TestField tf{&zero, nullptr, &zb, &zg};
    CHECK(test_field_F(zero_set(2, 2), mm, 0.0, Vec::Ones(2), tf).value == doctest::Approx(0.0).scale(1.0));

    CoefficientSet cs = rich_set();
    cs.diffusion = [](double, const Vec&, const Vec&, const NoiseHistory&) { return Mat(Mat::Zero(2, 2)); };
    cs.jump = [](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return Vec(Vec::Zero(2)); };
    cs.generator = [](double, const Vec&, const Vec&, double, const Vec&, double, const NoiseHistory&) { return 0.0; };
    const Vec c = (Vec(2) << 2.0, -1.0).finished();
    FunctionField lin([&](double, const Vec& y) { return c.dot(y); });
    TestField tl{&lin, nullptr, &zb, &zg};
    const Vec x = (Vec(2) << 0.1, 0.9).finished();
    double best = 1e300;
    for (const Vec& u : cs.controls) best = std::min(best, c.dot(cs.drift(0, x, u, NoiseHistory::none())));
    CHECK(test_field_F(cs, mm, 0.0, x, tl).value == doctest::Approx(best).epsilon(1e-8));

    const CoefficientSet full = rich_set();
    const FunctionField phi = quad_field();
    FunctionVectorField beta(2, [](double, const Vec& y) { return Vec(0.3 * y); });
    FunctionMarkField gamma([](double, std::size_t i, const Vec& y) { return i == 0 ? y(1) : -y(0); });
    TestField tfull{&phi, nullptr, &beta, &gamma};
    CHECK(test_field_F(full, mm, 0.2, x, tfull).value == drift_F(full, mm, 0.2, x, phi, beta, gamma).value);
}

TEST_CASE("generator L") {
    CoefficientSet cs = rich_set();
    const MarkMeasure mm = rich_measure();
    const Vec x = Vec::Constant(2, 0.4), u = v1(1.0);
    ConstantField c(2.0);
    CHECK(generator_L(cs, mm, 0.0, x, u, c) == doctest::Approx(0.0).scale(1.0));

    CoefficientSet nojump = cs;
    nojump.jump = [](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return Vec(Vec::Zero(2)); };
    const Vec a = (Vec(2) << 1.0, 3.0).finished();
    FunctionField lin([&](double, const Vec& y) { return a.dot(y); }, [&](double, const Vec&) { return a; },
                      [](double, const Vec&) { return Mat(Mat::Zero(2, 2)); });
    CHECK(generator_L(nojump, mm, 0.0, x, u, lin) ==
          doctest::Approx(a.dot(cs.drift(0, x, u, NoiseHistory::none()))));

    CoefficientSet shift = zero_set(2, 2);
    const Vec v = (Vec(2) << 0.3, 0.4).finished();
    shift.jump = [v](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return v; };
    MarkMeasure one({{v1(0.0), 1.7, 0.5}});
    FunctionField sq([](double, const Vec& y) { return y.squaredNorm(); },
                     [](double, const Vec& y) { return Vec(2.0 * y); },
                     [](double, const Vec& y) { return Mat(2.0 * Mat::Identity(y.size(), y.size())); });
    CHECK(generator_L(shift, one, 0.0, Vec::Constant(2, -0.8), u, sq) == doctest::Approx(1.7 * v.squaredNorm()));
}

TEST_CASE("Monte Carlo generator consistency") {
    // one-dimensional: b = 0.3 - x, sigma = 0.5, one atom with g = 0.4
    CoefficientSet cs = zero_set(1, 1);
    cs.drift = [](double, const Vec& x, const Vec&, const NoiseHistory&) { return Vec(v1(0.3 - x(0))); };
    cs.diffusion = [](double, const Vec&, const Vec&, const NoiseHistory&) { return Mat(Mat::Constant(1, 1, 0.5)); };
    cs.jump = [](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return Vec(v1(0.4)); };
    MarkMeasure mm({{v1(0.0), 1.5, 0.4}});
    FunctionField phi([](double, const Vec& y) { return std::cos(y(0)); });
    const Vec x = v1(0.2), u = v1(0.0);
    const double exact = generator_L(cs, mm, 0.0, x, u, phi);

    // E phi(X_dt) by exact simulation of one Euler step with exact jumps
    std::vector<double> est, se;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) {
        Rng rng(11);
        std::normal_distribution<double> N;
        const int paths = 400000;
        double s = 0, s2 = 0;
        for (int p = 0; p < paths; ++p) {
            const auto js = mm.sample_jumps(0.0, dt, rng);
            const double xn = x(0) + (0.3 - x(0)) * dt - 1.5 * 0.4 * dt + 0.5 * std::sqrt(dt) * N(rng) +
                              0.4 * static_cast<double>(js.size());
            const double v = (std::cos(xn) - std::cos(x(0))) / dt;
            s += v;
            s2 += v * v;
        }
        const double m = s / paths;
        est.push_back(m);
        se.push_back(std::sqrt((s2 / paths - m * m) / paths));
    }
    // linear Richardson extrapolation on the two finest levels
    const double extrap = 2.0 * est[2] - est[1];
    const double extrap_se = std::sqrt(4 * se[2] * se[2] + se[1] * se[1]);
    CHECK(std::abs(extrap - exact) <= 0.02 * std::abs(exact) + 3.0 * extrap_se);
}

TEST_CASE("assumption probes") {
    MarkMeasure mm({{v1(0.5), 1.0, 1.0}});
    CoefficientSet lin = zero_set(1, 1);
    lin.drift = [](double, const Vec& x, const Vec&, const NoiseHistory&) { return Vec(2.0 * x); };
    ProbeSpec spec;
    spec.lower = v1(-2.0);
    spec.upper = v1(2.0);
    Rng rng(1);
    AssumptionReport r = probe_assumptions(lin, mm, spec, rng);
    CHECK(r.lipschitz_drift == doctest::Approx(2.0).epsilon(0.01));
    CHECK(r.lipschitz_diffusion == 0.0);
    CHECK(r.lipschitz_jump == 0.0);
    CHECK(r.flags.empty());

    CoefficientSet constant = zero_set(1, 1);
    constant.drift = [](double, const Vec&, const Vec&, const NoiseHistory&) { return Vec(v1(3.0)); };
    r = probe_assumptions(constant, mm, spec, rng);
    CHECK(r.lipschitz_drift == 0.0);
    CHECK(r.lipschitz_generator_xu == 0.0);
    CHECK(r.lipschitz_terminal == 0.0);

    CoefficientSet sq = zero_set(1, 1);
    sq.generator = [](double, const Vec& x, const Vec&, double, const Vec&, double, const NoiseHistory&) {
        return x(0) * x(0);
    };
    sq.terminal = [](const Vec& x, const NoiseHistory&) { return x(0) * x(0); };
    r = probe_assumptions(sq, mm, spec, rng);
    CHECK(r.lipschitz_generator_xu <= 1.0);
    CHECK(r.lipschitz_terminal <= 1.0);
    CHECK(r.lipschitz_generator_xu > 0.5);

    CoefficientSet decreasing = zero_set(1, 1);
    decreasing.generator = [](double, const Vec&, const Vec&, double, const Vec&, double k, const NoiseHistory&) {
        return -k;
    };
    r = probe_assumptions(decreasing, mm, spec, rng);
    CHECK(r.monotonicity_violations > 0);
    CHECK_FALSE(r.flags.empty());
    CHECK(r.exp_integrability == doctest::Approx(std::exp(1.0)));
}
