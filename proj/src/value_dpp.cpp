// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/value_dpp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace jumphjb {

const char* to_string(ValueMode mode) {
    switch (mode) {
        case ValueMode::Auto: return "auto";
        case ValueMode::OpenLoop: return "open-loop";
        case ValueMode::Feedback: return "feedback";
    }
    return "?";
}

PolicyFamily PolicyFamily::uniform(const TimeGrid& grid, std::size_t stride, std::vector<Vec> candidates) {
    PolicyFamily f;
    f.candidates = std::move(candidates);
    f.decision_nodes.clear();
    if (stride == 0) stride = grid.steps();
    for (std::size_t i = 0; i < grid.steps(); i += stride) f.decision_nodes.push_back(i);
    return f;
}

void PolicyFamily::validate(const TimeGrid& grid) const {
    if (candidates.empty()) fail(ErrorCode::InvalidArgument, "policy family has no candidate controls");
    if (decision_nodes.empty() || decision_nodes.front() != 0)
        fail(ErrorCode::InvalidArgument, "decision nodes must start at node 0");
    for (std::size_t j = 0; j < decision_nodes.size(); ++j) {
        if (decision_nodes[j] >= grid.steps()) fail(ErrorCode::InvalidArgument, "decision node beyond the last step");
        if (j > 0 && decision_nodes[j] <= decision_nodes[j - 1])
            fail(ErrorCode::InvalidArgument, "decision nodes must be strictly increasing");
    }
}

double PolicyFamily::sequence_count() const {
    const double c = std::pow(static_cast<double>(candidates.size()), static_cast<double>(decision_nodes.size()));
    return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
}

std::size_t PolicyFamily::interval_of(std::size_t step) const {
    const auto it = std::upper_bound(decision_nodes.begin(), decision_nodes.end(), step);
    return static_cast<std::size_t>(it - decision_nodes.begin()) - 1;
}

std::vector<std::size_t> sequence_digits(std::size_t index, std::size_t base, std::size_t length) {
    std::vector<std::size_t> d(length);
    for (std::size_t j = length; j-- > 0;) {
        d[j] = index % base;
        index /= base;
    }
    return d;
}

namespace {

std::size_t step_at(const TimeGrid& grid, double t) {
    const double r = std::round((t - grid.t0()) / grid.dt());
    if (r <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(r), grid.steps() - 1);
}

std::size_t first_min(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best]) best = i;
    return best;
}

// Per decision node, the range of states reached under any constant candidate.
std::vector<std::pair<Vec, Vec>> pilot_boxes(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid,
                                             const Vec& x0, const PolicyFamily& family, std::size_t n_paths,
                                             const SeedSequence& seeds) {
    const std::size_t P = std::min<std::size_t>(n_paths, 2000);
    std::vector<std::pair<Vec, Vec>> box(family.intervals(), {x0, x0});
    for (const Vec& c : family.candidates) {
        const PathBundle b = simulate(cs, mm, grid, {x0}, constant_policy(c), P, seeds.child("pilot"));
        for (std::size_t j = 1; j < family.intervals(); ++j)
            for (std::size_t p = 0; p < P; ++p) {
                const auto x = b.state(p, family.decision_nodes[j]);
                box[j].first = box[j].first.cwiseMin(x);
                box[j].second = box[j].second.cwiseMax(x);
            }
    }
    return box;
}

ValueEstimate open_loop(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                        const PolicyFamily& family, const ValueOptions& options, std::size_t n_paths,
                        const SeedSequence& seeds) {
    ValueEstimate est;
    est.mode = ValueMode::OpenLoop;
    est.grid = grid;
    est.family = family;
    const std::size_t count = static_cast<std::size_t>(family.sequence_count());
    est.sequence_costs.resize(count);
    est.sequence_se.resize(count);
    const SeedSequence common = seeds.child("open-loop");
    for (std::size_t m = 0; m < count; ++m) {
        const auto seq = sequence_digits(m, family.candidates.size(), family.intervals());
        const CostEstimate c =
            recursive_cost(cs, mm, grid, x0, sequence_policy(grid, family, seq), options.bsde, n_paths, common);
        est.sequence_costs[m] = c.value;
        est.sequence_se[m] = c.se;
    }
    const std::size_t best = first_min(est.sequence_costs);
    est.value = est.sequence_costs[best];
    est.std_error = est.sequence_se[best];
    est.policy_cost = est.value;
    est.sequence = sequence_digits(best, family.candidates.size(), family.intervals());
    std::ostringstream os;
    os << "open-loop sequence [";
    for (std::size_t j = 0; j < est.sequence.size(); ++j) os << (j ? "," : "") << est.sequence[j];
    os << "] over " << count << " sequences";
    est.optimizer = os.str();
    return est;
}

ValueEstimate feedback(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                       const PolicyFamily& family, const ValueOptions& options, std::size_t n_paths,
                       const SeedSequence& seeds) {
    ValueEstimate est;
    est.mode = ValueMode::Feedback;
    est.grid = grid;
    est.family = family;
    const std::size_t J = family.intervals();
    const std::size_t C = family.candidates.size();
    est.q_fn.assign(J, std::vector<RegressionFunction>(C));

    std::vector<std::pair<Vec, Vec>> boxes;
    if (options.explore_lower.size() == x0.size() && options.explore_upper.size() == x0.size()) {
        if ((options.explore_upper - options.explore_lower).minCoeff() < 0.0)
            fail(ErrorCode::InvalidArgument, "exploration box has upper < lower");
        boxes.assign(J, {options.explore_lower, options.explore_upper});
    } else if (options.explore_lower.size() != 0 || options.explore_upper.size() != 0) {
        fail(ErrorCode::InvalidArgument, "exploration box dimension does not match the state");
    } else if (J > 1) {
        boxes = pilot_boxes(cs, mm, grid, x0, family, n_paths, seeds);
    }

    std::vector<double> y0(C), se0(C);  // se0: one-step error at t0 only
    for (std::size_t j = J; j-- > 0;) {
        const std::size_t first = family.decision_nodes[j];
        const std::size_t last = j + 1 < J ? family.decision_nodes[j + 1] : grid.steps();
        const TimeGrid seg = grid.segment(first, last);
        std::vector<Vec> init;
        if (j == 0) {
            init.push_back(x0);
        } else {
            Rng rng = seeds.child("explore", j).stream(0);
            std::uniform_real_distribution<double> U(0.0, 1.0);
            init.resize(n_paths);
            for (Vec& x : init) {
                x.resize(x0.size());
                for (Eigen::Index c = 0; c < x.size(); ++c)
                    x(c) = boxes[j].first(c) + U(rng) * (boxes[j].second(c) - boxes[j].first(c));
            }
        }
        TerminalOverride terminal;
        if (j + 1 < J) terminal = [&est, j](std::size_t, const Vec& x) { return est.field(j + 1, x); };
        const SeedSequence common = seeds.child("feedback", j);
        for (std::size_t c = 0; c < C; ++c) {
            const PathBundle b = simulate(cs, mm, seg, init, constant_policy(family.candidates[c]), n_paths, common);
            BsdeSolution sol;
            try {
                sol = solve(cs, mm, b, options.bsde, terminal);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "decision interval " << j << ", candidate " << c << ": " << e.what();
                fail(e.code(), os.str());
            }
            est.q_fn[j][c] = sol.y_fn[0];
            if (j == 0) {
                y0[c] = sol.y0;
                se0[c] = sol.y0_se;
            }
        }
    }
    const std::size_t best = first_min(y0);
    est.value = y0[best];
    est.sequence = {best};
    const CostEstimate eval =
        recursive_cost(cs, mm, grid, x0, est.policy(), options.bsde, n_paths, seeds.child("feedback-eval"));
    est.policy_cost = eval.value;
    est.std_error = std::max(se0[best], eval.se);
    std::ostringstream os;
    os << "feedback argmin over " << C << " candidates at " << J << " decision nodes; candidate " << best
       << " at t0";
    est.optimizer = os.str();
    return est;
}

}  // namespace

double ValueEstimate::field(std::size_t interval, const Vec& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : q_fn.at(interval)) best = std::min(best, q(x));
    return best;
}

std::size_t ValueEstimate::argmin(std::size_t interval, const Vec& x) const {
    const auto& qs = q_fn.at(interval);
    std::size_t best = 0;
    double v = qs[0](x);
    for (std::size_t c = 1; c < qs.size(); ++c) {
        const double w = qs[c](x);
        if (w < v) {
            v = w;
            best = c;
        }
    }
    return best;
}

Policy ValueEstimate::policy() const {
    if (mode != ValueMode::Feedback) return sequence_policy(grid, family, sequence);
    // The argmin is re-read at every step from the current interval's Q-functions.
    auto self = std::make_shared<const ValueEstimate>(*this);
    return [self](double t, const Vec& x, const NoiseHistory&) {
        const std::size_t j = self->family.interval_of(step_at(self->grid, t));
        return self->family.candidates[self->argmin(j, x)];
    };
}

Policy sequence_policy(const TimeGrid& grid, const PolicyFamily& family, const std::vector<std::size_t>& sequence) {
    if (sequence.size() != family.intervals())
        fail(ErrorCode::InvalidArgument, "sequence length differs from the number of decision intervals");
    std::vector<Vec> per_interval;
    for (std::size_t c : sequence) per_interval.push_back(family.candidates.at(c));
    return [grid, family, per_interval](double t, const Vec&, const NoiseHistory&) {
        return per_interval[family.interval_of(step_at(grid, t))];
    };
}

ValueEstimate value(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                    const PolicyFamily& family, const ValueOptions& options, std::size_t n_paths,
                    const SeedSequence& seeds) {
    family.validate(grid);
    if (x0.size() != cs.n) fail(ErrorCode::InvalidArgument, "initial state has the wrong dimension");
    const double count = family.sequence_count();
    switch (options.mode) {
        case ValueMode::OpenLoop:
            if (count > options.budget) {
                std::ostringstream os;
                os << "open-loop enumeration needs " << count << " sequences, budget is " << options.budget;
                fail(ErrorCode::EnumerationTooLarge, os.str());
            }
            return open_loop(cs, mm, grid, x0, family, options, n_paths, seeds);
        case ValueMode::Feedback:
            return feedback(cs, mm, grid, x0, family, options, n_paths, seeds);
        case ValueMode::Auto:
            break;
    }
    if (count <= options.budget) return open_loop(cs, mm, grid, x0, family, options, n_paths, seeds);
    return feedback(cs, mm, grid, x0, family, options, n_paths, seeds);
}

DppReport dpp_residual(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                       const PolicyFamily& family, std::size_t split, const ValueOptions& options,
                       std::size_t n_paths, const SeedSequence& seeds) {
    family.validate(grid);
    if (split == 0) split = family.intervals() > 1 ? family.decision_nodes[1] : grid.steps() / 2;
    if (split == 0 || split >= grid.steps()) fail(ErrorCode::InvalidArgument, "split node must be interior");
    PolicyFamily fam = family;
    if (!std::binary_search(fam.decision_nodes.begin(), fam.decision_nodes.end(), split)) {
        fam.decision_nodes.push_back(split);
        std::sort(fam.decision_nodes.begin(), fam.decision_nodes.end());
    }
    const std::size_t js = static_cast<std::size_t>(
        std::lower_bound(fam.decision_nodes.begin(), fam.decision_nodes.end(), split) - fam.decision_nodes.begin());

    ValueOptions fb = options;
    fb.mode = ValueMode::Feedback;
    const ValueEstimate full = value(cs, mm, grid, x0, fam, fb, n_paths, seeds.child("dpp-full"));
    const ValueEstimate tail = value(cs, mm, grid, x0, fam, fb, n_paths, seeds.child("dpp-field"));
    const auto field = [&tail, js](const Vec& x) { return tail.field(js, x); };

    DppReport r;
    r.split_node = split;
    r.full = full.value;
    r.full_se = full.std_error;
    const TimeGrid outer = grid.segment(0, split);
    const SeedSequence common = seeds.child("dpp-outer");
    PolicyFamily head;
    head.candidates = fam.candidates;
    head.decision_nodes.assign(fam.decision_nodes.begin(), fam.decision_nodes.begin() + static_cast<long>(js));
    const double count = head.sequence_count();
    if (count <= options.budget) {
        r.outer_sequences = static_cast<std::size_t>(count);
        r.rhs = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < r.outer_sequences; ++m) {
            const auto seq = sequence_digits(m, head.candidates.size(), head.intervals());
            const CostEstimate c = backward_semigroup(cs, mm, outer, x0, sequence_policy(outer, head, seq), field,
                                                      options.bsde, n_paths, common);
            if (c.value < r.rhs) {
                r.rhs = c.value;
                r.rhs_se = c.se;
            }
        }
    } else {
        const CostEstimate c =
            backward_semigroup(cs, mm, outer, x0, tail.policy(), field, options.bsde, n_paths, common);
        r.rhs = c.value;
        r.rhs_se = c.se;
    }
    r.rhs_se = std::hypot(r.rhs_se, tail.std_error);
    r.residual = std::abs(r.full - r.rhs);
    r.combined_se = std::hypot(r.full_se, r.rhs_se);
    return r;
}

}  // namespace jumphjb
