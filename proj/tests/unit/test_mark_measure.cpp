// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "jumphjb/mark_measure.hpp"

#include <cmath>

using namespace jumphjb;

namespace {
Vec v1(double a) { return Vec::Constant(1, a); }

MarkMeasure two_atoms() { return MarkMeasure({{v1(1.0), 0.5, 0.1}, {v1(2.0), 1.5, 0.2}}); }
}  // namespace

TEST_CASE("quadrature sums weights times integrand") {
    const MarkMeasure mm = two_atoms();
    CHECK(mm.quadrature([](std::size_t) { return 0.0; }) == 0.0);
    CHECK(mm.quadrature([](std::size_t) { return 1.0; }) == doctest::Approx(mm.total_mass()));
    CHECK(mm.quadrature([](std::size_t i) { return static_cast<double>(i + 1); }) == doctest::Approx(3.5));
}

TEST_CASE("l2 norm against direct summation") {
    MarkMeasure single({{v1(0.0), 4.0, 0.0}});
    CHECK(single.l2_norm([](std::size_t) { return 3.0; }) == doctest::Approx(6.0));
    CHECK(single.l2_norm([](std::size_t) { return 0.0; }) == 0.0);

    std::vector<Atom> atoms;
    std::vector<double> r;
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int i = 0; i < 10; ++i) {
        atoms.push_back({v1(i), u(rng), 0.0});
        r.push_back(u(rng) - 1.0);
    }
    MarkMeasure mm(atoms);
    double acc = 0.0;
    for (int i = 0; i < 10; ++i) acc += atoms[i].weight * r[i] * r[i];
    const double n = mm.l2_norm([&](std::size_t i) { return r[i]; });
    CHECK(n == doctest::Approx(std::sqrt(acc)).epsilon(1e-14));
    CHECK(n * n == doctest::Approx(mm.quadrature([&](std::size_t i) { return r[i] * r[i]; })).epsilon(1e-14));
}

TEST_CASE("compensator increment") {
    MarkMeasure mm({{v1(0.0), 2.0, 0.0}});
    CHECK(mm.compensator_increment(0.0, 0.5, [](std::size_t) { return 1.0; }) == doctest::Approx(1.0));
    CHECK(mm.compensator_increment(0.0, 0.5, [](std::size_t) { return 0.0; }) == 0.0);
    const MarkMeasure two = two_atoms();
    CHECK(two.compensator_increment(0.25, 1.0, [](std::size_t i) { return i == 0 ? 2.0 : -1.0; }) ==
          doctest::Approx(0.75 * (0.5 * 2.0 - 1.5)));
    CHECK_THROWS_AS(two.compensator_increment(1.0, 0.5, [](std::size_t) { return 1.0; }), Error);
}

TEST_CASE("invalid atoms are rejected") {
    CHECK_THROWS_AS(MarkMeasure({{v1(0.0), -1.0, 0.0}}), Error);
    CHECK_THROWS_AS(MarkMeasure({{v1(0.0), 1.0, -0.1}}), Error);
    CHECK_THROWS_AS(MarkMeasure({{v1(0.0), 1.0, 0.0}, {Vec::Zero(2), 1.0, 0.0}}), Error);
}

TEST_CASE("sample_jumps edge cases") {
    Rng rng(1);
    MarkMeasure empty({{v1(0.0), 0.0, 0.0}});
    CHECK(empty.sample_jumps(0.0, 1.0, rng).empty());
    CHECK(two_atoms().sample_jumps(0.3, 0.3, rng).empty());
    try {
        two_atoms().sample_jumps(1.0, 0.0, rng);
        FAIL("expected invalid interval");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidInterval);
    }
}

TEST_CASE("sample_jumps empirical law") {
    MarkMeasure mm({{v1(-1.0), 0.5, 0.0}, {v1(0.5), 1.0, 0.0}, {v1(2.0), 0.5, 0.0}});
    const int draws = 100000;
    Rng rng(2024);
    double sum = 0.0, sum2 = 0.0, mart = 0.0, mart2 = 0.0;
    std::vector<double> freq(3, 0.0);
    double total = 0.0;
    auto phi = [&](std::size_t i) { return std::sin(mm.atom(i).mark(0)); };
    const double comp = mm.compensator_increment(0.0, 1.0, phi);
    for (int k = 0; k < draws; ++k) {
        const auto js = mm.sample_jumps(0.0, 1.0, rng);
        const double c = static_cast<double>(js.size());
        sum += c;
        sum2 += c * c;
        double s = 0.0;
        for (std::size_t j = 0; j < js.size(); ++j) {
            CHECK_FALSE(js[j].time <= 0.0);
            CHECK_FALSE(js[j].time > 1.0);
            if (j > 0) CHECK(js[j].time >= js[j - 1].time);
            freq[js[j].mark_index] += 1.0;
            total += 1.0;
            s += phi(js[j].mark_index);
        }
        mart += s - comp;
        mart2 += (s - comp) * (s - comp);
    }
    const double mean = sum / draws;
    const double var = sum2 / draws - mean * mean;
    CHECK(std::abs(mean - 2.0) <= 3.0 * std::sqrt(2.0 / draws));
    CHECK(std::abs(var - 2.0) <= 0.05 * 2.0);
    for (std::size_t i = 0; i < 3; ++i) {
        const double pi = mm.atom(i).weight / mm.total_mass();
        CHECK(std::abs(freq[i] / total - pi) <= 4.0 * std::sqrt(pi * (1 - pi) / total));
    }
    const double mm_mean = mart / draws;
    const double mm_se = std::sqrt((mart2 / draws - mm_mean * mm_mean) / draws);
    CHECK(std::abs(mm_mean) <= 4.0 * mm_se);
}

TEST_CASE("sampling is reproducible from the stream state") {
    const MarkMeasure mm = two_atoms();
    Rng a(99), b(99);
    const auto ja = mm.sample_jumps(0.0, 3.0, a);
    const auto jb = mm.sample_jumps(0.0, 3.0, b);
    REQUIRE(ja.size() == jb.size());
    for (std::size_t i = 0; i < ja.size(); ++i) {
        CHECK(ja[i].time == jb[i].time);
        CHECK(ja[i].mark_index == jb[i].mark_index);
    }
}
