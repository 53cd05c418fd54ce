// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/bsde_solver.hpp"

#include <string>
#include <vector>

namespace jumphjb {

enum class ValueMode { Auto, OpenLoop, Feedback };

const char* to_string(ValueMode mode);

/// Piecewise-constant controls that may switch only at `decision_nodes`
/// (grid node indices, strictly increasing, first one 0).
struct PolicyFamily {
    std::vector<std::size_t> decision_nodes{0};
    std::vector<Vec> candidates;

    /// Decision nodes every `stride` steps; stride 0 gives a single interval.
    static PolicyFamily uniform(const TimeGrid& grid, std::size_t stride, std::vector<Vec> candidates);

    void validate(const TimeGrid& grid) const;
    std::size_t intervals() const { return decision_nodes.size(); }
    /// candidates^intervals, saturated at +inf.
    double sequence_count() const;
    /// Decision interval containing grid step `step`.
    std::size_t interval_of(std::size_t step) const;
};

struct ValueOptions {
    ValueMode mode = ValueMode::Auto;
    double budget = 1e6;  // max open-loop sequences
    /// Box sampled for the feedback recursion's decision-node states. Empty:
    /// taken from pilot runs under every constant candidate.
    Vec explore_lower, explore_upper;
    BsdeOptions bsde;
};

struct ValueEstimate {
    double value = 0.0;
    /// Open loop: Monte Carlo error of the optimal sequence's cost. Feedback:
    /// error of the fitted policy's cost re-simulated on fresh noise, since
    /// the one-step error at t0 misses the regression noise of later nodes.
    double std_error = 0.0;
    /// Cost of the optimizer evaluated forward (feedback: fresh noise).
    double policy_cost = 0.0;
    ValueMode mode = ValueMode::OpenLoop;  // the mode actually used
    std::string optimizer;                 // human-readable policy description

    TimeGrid grid;
    PolicyFamily family;
    /// Open loop: optimal candidate index per interval, and the cost of every
    /// sequence in lexicographic order (first interval most significant).
    std::vector<std::size_t> sequence;
    std::vector<double> sequence_costs;
    std::vector<double> sequence_se;
    /// Feedback: continuation value of each candidate at each decision node.
    std::vector<std::vector<RegressionFunction>> q_fn;  // [interval][candidate]

    /// Feedback value field min_c Q_c at decision interval j, and its argmin.
    double field(std::size_t interval, const Vec& x) const;
    std::size_t argmin(std::size_t interval, const Vec& x) const;
    /// The optimizer as a policy on `grid`.
    Policy policy() const;
};

/// Digits of sequence `index` (base = candidate count, most significant first).
std::vector<std::size_t> sequence_digits(std::size_t index, std::size_t base, std::size_t length);

/// Open-loop control sequence as a policy on `grid`.
Policy sequence_policy(const TimeGrid& grid, const PolicyFamily& family, const std::vector<std::size_t>& sequence);

/// Minimum recursive cost over the family.
/// OpenLoop: every control sequence with common random numbers; throws
/// EnumerationTooLarge past the budget. Feedback: backward over decision
/// nodes, each candidate's continuation value is regressed on sampled
/// states and the pointwise minimum becomes the next terminal. Auto picks
/// OpenLoop when it fits the budget. Ties go to the lowest index.
/// Feedback assumes Markovian coefficients (segments restart the history).
ValueEstimate value(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                    const PolicyFamily& family, const ValueOptions& options, std::size_t n_paths,
                    const SeedSequence& seeds);

struct DppReport {
    std::size_t split_node = 0;
    double full = 0.0, full_se = 0.0;  // feedback value on the whole horizon
    double rhs = 0.0, rhs_se = 0.0;    // min_u G_{[t0, split]}[V(split, .)]
    double residual = 0.0;             // |full - rhs|
    double combined_se = 0.0;
    std::size_t outer_sequences = 0;   // 0 when the outer minimum used the feedback policy
};

/// Dynamic programming residual at `split` (a grid node; 0 picks the first
/// decision node after t0; added as a decision node if missing). V(split, .)
/// comes from a feedback run independent of the full-horizon one, and the
/// outer segment is solved with fresh noise. The outer minimum enumerates
/// sequences on the intervals before the split when within the budget.
/// rhs_se combines the outer segment's error with that of the V(split, .) run.
DppReport dpp_residual(const CoefficientSet& cs, const MarkMeasure& mm, const TimeGrid& grid, const Vec& x0,
                       const PolicyFamily& family, std::size_t split, const ValueOptions& options,
                       std::size_t n_paths, const SeedSequence& seeds);

}  // namespace jumphjb
