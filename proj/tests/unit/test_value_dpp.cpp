// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "jumphjb/scenario.hpp"
#include "jumphjb/value_dpp.hpp"

#include <cmath>
#include <limits>

using namespace jumphjb;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

ValueOptions opts(const Scenario& s, ValueMode mode) {
    ValueOptions o = value_options(s);
    o.mode = mode;
    return o;
}

}  // namespace

TEST_CASE("policy family bookkeeping") {
    const TimeGrid g(0, 1, 16);
    const PolicyFamily f = PolicyFamily::uniform(g, 4, {v1(-1), v1(1)});
    CHECK(f.decision_nodes == std::vector<std::size_t>{0, 4, 8, 12});
    CHECK(f.sequence_count() == 16.0);
    CHECK(f.interval_of(0) == 0);
    CHECK(f.interval_of(3) == 0);
    CHECK(f.interval_of(4) == 1);
    CHECK(f.interval_of(15) == 3);
    CHECK(PolicyFamily::uniform(g, 0, {v1(0)}).decision_nodes == std::vector<std::size_t>{0});
    CHECK(sequence_digits(6, 2, 4) == std::vector<std::size_t>{0, 1, 1, 0});

    PolicyFamily bad = f;
    bad.decision_nodes = {1, 4};
    CHECK_THROWS_AS(bad.validate(g), Error);
    bad.decision_nodes = {0, 4, 4};
    CHECK_THROWS_AS(bad.validate(g), Error);
    bad.decision_nodes = {0, 16};
    CHECK_THROWS_AS(bad.validate(g), Error);
    bad = f;
    bad.candidates.clear();
    CHECK_THROWS_AS(bad.validate(g), Error);

    const Policy pol = sequence_policy(g, f, {1, 0, 0, 1});
    CHECK(pol(0.0, v1(0), NoiseHistory::none())(0) == 1.0);
    CHECK(pol(4.0 / 16, v1(0), NoiseHistory::none())(0) == -1.0);
    CHECK(pol(15.0 / 16, v1(0), NoiseHistory::none())(0) == 1.0);
}

TEST_CASE("control-independent problem: value is the fixed-control cost") {
    Scenario s = builtin_scenario("linear-bsde");
    s.cs.controls = {v1(0.0), v1(1.0), v1(2.0)};
    const TimeGrid g(0, 1, 16);
    const SeedSequence seeds(5, "value");
    const Policy fixed = constant_policy(v1(2.0));
    const PolicyFamily fam = PolicyFamily::uniform(g, 8, s.cs.controls);
    const ValueEstimate v = value(s.cs, s.mm, g, s.x0, fam, opts(s, ValueMode::OpenLoop), 4000, seeds);
    // the open-loop stage shares one noise across sequences; so does this oracle
    const CostEstimate c = recursive_cost(s.cs, s.mm, g, s.x0, fixed, s.bsde, 4000, seeds.child("open-loop"));
    CHECK(v.value == doctest::Approx(c.value).epsilon(1e-12));
    CHECK(v.sequence == std::vector<std::size_t>{0, 0});
    CHECK(v.std_error >= 0.0);

    Scenario single = s;
    single.cs.controls = {v1(1.0)};
    const PolicyFamily one = PolicyFamily::uniform(g, 0, single.cs.controls);
    for (ValueMode m : {ValueMode::OpenLoop, ValueMode::Feedback}) {
        const ValueEstimate w = value(single.cs, single.mm, g, single.x0, one, opts(single, m), 4000, seeds);
        CHECK(w.value == doctest::Approx(c.value).epsilon(1e-3));
    }
}

TEST_CASE("two-control open loop matches brute-force enumeration on four decision nodes") {
    const Scenario s = builtin_scenario("two-control-1d");
    const TimeGrid g(0, 1, 16);
    const PolicyFamily fam = PolicyFamily::uniform(g, 4, s.cs.controls);
    REQUIRE(fam.intervals() == 4);
    BsdeOptions bo;  // degree-3 polynomial basis
    ValueOptions o;
    o.mode = ValueMode::OpenLoop;
    o.bsde = bo;
    const SeedSequence seeds(11, "enum");
    const ValueEstimate v = value(s.cs, s.mm, g, s.x0, fam, o, 5000, seeds);
    REQUIRE(v.sequence_costs.size() == 16);

    // Independent enumeration: hand-built piecewise-constant controls.
    double best = std::numeric_limits<double>::infinity();
    int best_mask = -1;
    for (int mask = 0; mask < 16; ++mask) {
        const Policy pol = [mask](double t, const Vec&, const NoiseHistory&) {
            const int interval = std::min(3, static_cast<int>(std::floor(t * 4.0 + 1e-9)));
            return v1(((mask >> (3 - interval)) & 1) ? 1.0 : -1.0);
        };
        const CostEstimate c = recursive_cost(s.cs, s.mm, g, s.x0, pol, bo, 5000, seeds.child("open-loop"));
        CHECK(v.sequence_costs[static_cast<std::size_t>(mask)] == doctest::Approx(c.value).epsilon(1e-12));
        if (c.value < best) {
            best = c.value;
            best_mask = mask;
        }
    }
    CHECK(v.value == doctest::Approx(best).epsilon(1e-12));
    CHECK(v.sequence == sequence_digits(static_cast<std::size_t>(best_mask), 2, 4));

    // Analytic: E[X(T)^2] = (x0 + sum_j u_j / 4)^2 + sigma^2 T; the best open-loop
    // sequences end at 0 (two -1 and two +1 would end at 1, three -1 end at 0.5 ...).
    // x0 = 1 needs sum u_j = -4: all four intervals at -1.
    CHECK(v.sequence == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK(std::abs(v.value - 0.04) <= 4.0 * v.std_error + 2e-3);

    // feedback can only help, up to noise
    ValueOptions fo = value_options(s);
    fo.mode = ValueMode::Feedback;
    const ValueEstimate fb = value(s.cs, s.mm, g, s.x0, fam, fo, 20000, seeds);
    CHECK(fb.value <= v.value + 3.0 * std::hypot(v.std_error, fb.std_error) + 2e-3);
}

TEST_CASE("budget and auto mode") {
    const Scenario s = builtin_scenario("two-control-1d");
    const TimeGrid g(0, 1, 8);
    const PolicyFamily fam = PolicyFamily::uniform(g, 1, s.cs.controls);
    ValueOptions o = value_options(s);
    o.budget = 100;  // 2^8 sequences
    o.mode = ValueMode::OpenLoop;
    try {
        value(s.cs, s.mm, g, s.x0, fam, o, 1000, SeedSequence(1, "b"));
        FAIL("expected enumeration-too-large");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EnumerationTooLarge);
    }
    o.mode = ValueMode::Auto;
    CHECK(value(s.cs, s.mm, g, s.x0, fam, o, 1000, SeedSequence(1, "b")).mode == ValueMode::Feedback);
    o.budget = 1000;
    CHECK(value(s.cs, s.mm, g, s.x0, fam, o, 1000, SeedSequence(1, "b")).mode == ValueMode::OpenLoop);
}

TEST_CASE("adding a candidate never increases the value") {
    Scenario s = builtin_scenario("two-control-1d");
    const TimeGrid g(0, 1, 8);
    const SeedSequence seeds(3, "mono");
    s.cs.controls = {v1(1.0)};
    const PolicyFamily small = PolicyFamily::uniform(g, 4, s.cs.controls);
    const ValueEstimate a = value(s.cs, s.mm, g, s.x0, small, opts(s, ValueMode::OpenLoop), 2000, seeds);
    s.cs.controls = {v1(1.0), v1(-0.5)};
    const PolicyFamily big = PolicyFamily::uniform(g, 4, s.cs.controls);
    const ValueEstimate b = value(s.cs, s.mm, g, s.x0, big, opts(s, ValueMode::OpenLoop), 2000, seeds);
    CHECK(b.value <= a.value);
    // single interval: feedback minimum is exact too
    const ValueEstimate c =
        value(s.cs, s.mm, g, s.x0, PolicyFamily::uniform(g, 0, {v1(1.0)}), opts(s, ValueMode::Feedback), 2000, seeds);
    const ValueEstimate d = value(s.cs, s.mm, g, s.x0, PolicyFamily::uniform(g, 0, {v1(1.0), v1(-0.5)}),
                                  opts(s, ValueMode::Feedback), 2000, seeds);
    CHECK(d.value <= c.value);
}

TEST_CASE("dpp residual trivial cases") {
    const TimeGrid g(0, 1, 16);
    Scenario z = builtin_scenario("zero");
    z.cs.controls = {v1(0.0), v1(1.0)};
    ValueOptions o = value_options(z);
    o.explore_lower = v1(-1);
    o.explore_upper = v1(1);
    const PolicyFamily fam = PolicyFamily::uniform(g, 4, z.cs.controls);
    CHECK(dpp_residual(z.cs, z.mm, g, z.x0, fam, 0, o, 500, SeedSequence(2, "d")).residual == 0.0);

    Scenario one = z;
    one.cs.generator = [](double, const Vec&, const Vec&, double, const Vec&, double, const NoiseHistory&) {
        return 1.0;
    };
    for (std::size_t split : {0, 4, 7, 12}) {
        const DppReport r = dpp_residual(one.cs, one.mm, g, one.x0, fam, split, o, 500, SeedSequence(2, "d"));
        CHECK(r.full == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.residual <= 1e-12);
    }
    CHECK_THROWS_AS(dpp_residual(one.cs, one.mm, g, one.x0, fam, 16, o, 500, SeedSequence(2, "d")), Error);
}

TEST_CASE("dpp residual on the two-control scenario within noise plus refinement allowance") {
    const Scenario s = builtin_scenario("two-control-1d");
    const ValueOptions o = value_options(s);
    const std::size_t P = 20000;
    auto level = [&](std::size_t steps, std::size_t paths, std::uint64_t seed) {
        const TimeGrid g(0, s.T, steps);
        return std::pair{dpp_residual(s.cs, s.mm, g, s.x0, policy_family(s, g), 0, o, paths, SeedSequence(seed, "dpp")),
                         value(s.cs, s.mm, g, s.x0, policy_family(s, g), o, paths, SeedSequence(seed, "v"))};
    };
    const auto [r16, v16] = level(16, P, 1);
    const auto [r32, v32] = level(32, 2 * P, 1);
    const double allowance = std::abs(v16.value - v32.value);
    CHECK(r16.residual <= 2.0 * r16.combined_se + allowance);
    CHECK(r16.outer_sequences == 2);
    CHECK(r16.full == doctest::Approx(v16.value).epsilon(0.2));
    // bang-bang steering to the origin: cost near sigma^2 T / something small, never above the open-loop 0.04
    CHECK(v32.value <= 0.04 + 3 * v32.std_error + 2e-3);
}
