// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/bsde_solver.hpp"
#include "jumphjb/coefficients.hpp"
#include "jumphjb/integro_pde.hpp"
#include "jumphjb/mark_measure.hpp"
#include "jumphjb/value_dpp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace jumphjb {

struct ValueSettings {
    ValueMode mode = ValueMode::Auto;
    std::size_t decision_stride = 0;  // 0: one decision interval spanning the horizon
    double budget = 1e6;              // max open-loop sequences
    Vec explore_lower, explore_upper; // state box sampled by the feedback recursion
    std::size_t dpp_split = 0;        // 0: first decision node after t0
};

struct PdeSettings {
    bool enabled = false;
    Vec lower, upper;
    double dx = 1.0 / 64.0;
    std::size_t time_steps = 0;  // 0: chosen from the CFL bound
    int extrapolation_order = 1;
    double collar = 0.0;  // absolute collar width; 0: a quarter of the box width
};

struct ProbeSettings {
    Vec lower, upper;
    std::size_t samples = 200;
    double lyapunov_radius = 5.0;
    std::size_t lyapunov_points = 401;  // per axis
};

struct ApproxSettings {
    std::vector<int> levels{4, 8, 16};
    int quadrature_order = 16;
    std::vector<std::pair<int, int>> projection{{2, 1}, {4, 2}, {8, 4}};
};

/// A fully resolved problem instance plus every solver knob.
struct Scenario {
    std::string name;
    std::string family;
    std::string description;
    std::string canonical;  // canonical JSON of the resolved configuration

    CoefficientSet cs;
    MarkMeasure mm;
    bool deterministic = true;

    double T = 1.0;
    std::size_t steps = 64;
    Vec x0;
    std::size_t policy_control = 0;

    std::size_t n_paths = 10000;
    BsdeOptions bsde;
    ValueSettings value;
    PdeSettings pde;
    ProbeSettings probe;
    ApproxSettings approx;
    std::size_t export_paths = 1000;
    std::uint64_t seed = 20240601;

    /// Exact V(t, x) when the family has a closed form.
    std::function<double(double t, const Vec& x)> reference;
    /// Exact E[X(T)] under the default policy, when known.
    std::optional<Vec> reference_mean_terminal;
    /// Scalar c when the instance is b = 0, g = 0, sigma = c I.
    std::optional<double> pure_diffusion_scale;
};

/// Built-in families; each name also loads as a scenario with defaults.
std::vector<std::pair<std::string, std::string>> list_builtin();

Scenario load_scenario_json(const std::string& text);
Scenario load_scenario_file(const std::string& path);
Scenario builtin_scenario(const std::string& name);
/// A file path if it exists, otherwise a built-in name.
Scenario load_scenario(const std::string& file_or_name);

/// Solver knobs of the value stage and the decision family on `grid`
/// (the stride is in units of the scenario's own steps and rescaled).
ValueOptions value_options(const Scenario& s);
PolicyFamily policy_family(const Scenario& s, const TimeGrid& grid);
PdeOptions pde_options(const Scenario& s);

/// Stable hash of the registry listing.
std::string registry_digest();

}  // namespace jumphjb
