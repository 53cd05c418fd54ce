// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/scenario.hpp"

#include "jumphjb/digest.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace jumphjb {

using json = nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

[[noreturn]] void schema(const std::string& what) { fail(ErrorCode::Schema, what); }

Vec to_vec(const json& j, const std::string& where) {
    if (!j.is_array()) schema(where + ": expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) schema(where + ": expected an array of numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

double num(const json& j, const std::string& where) {
    if (!j.is_number()) schema(where + ": expected a number");
    return j.get<double>();
}

std::size_t count(const json& j, const std::string& where) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) schema(where + ": expected a nonnegative integer");
    const auto v = j.get<long long>();
    if (v < 0) schema(where + ": expected a nonnegative integer");
    return static_cast<std::size_t>(v);
}

bool same_kind(const json& a, const json& b) {
    if (a.is_null() || b.is_null()) return true;
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

// Overlay `over` onto `base`; keys absent from `base` are schema errors.
void merge(json& base, const json& over, const std::string& path) {
    if (!over.is_object()) schema(path + ": expected an object");
    for (auto it = over.begin(); it != over.end(); ++it) {
        const std::string where = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) schema("unknown key '" + where + "'");
        json& slot = base[it.key()];
        if (!same_kind(slot, it.value())) schema(where + ": wrong type");
        if (slot.is_object())
            merge(slot, it.value(), where);
        else
            slot = it.value();
    }
}

// ---------------------------------------------------------------------------
// Shared coefficient pieces.

double abs1(const Vec& x) { return x.norm(); }

CoefficientSet base_set(Eigen::Index n, Eigen::Index d, Eigen::Index k) {
    CoefficientSet cs;
    cs.n = n;
    cs.d = d;
    cs.k = k;
    cs.drift = [n](double, const Vec&, const Vec&, const NoiseHistory&) { return Vec::Zero(n); };
    cs.diffusion = [n, d](double, const Vec&, const Vec&, const NoiseHistory&) { return Mat::Zero(n, d); };
    cs.jump = [n](double, const Vec&, const Vec&, const Vec&, const NoiseHistory&) { return Vec::Zero(n); };
    cs.generator = [](double, const Vec&, const Vec&, double, const Vec&, double, const NoiseHistory&) { return 0.0; };
    cs.terminal = [](const Vec&, const NoiseHistory&) { return 0.0; };
    cs.jump_weight = [](double, const Vec&) { return 1.0; };
    return cs;
}

double poisson_pmf(int k, double lambda) {
    return std::exp(k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
}

// ---------------------------------------------------------------------------
// Families.

struct Family {
    std::string description;
    json defaults;  // full configuration defaults, params included
    std::function<void(Scenario&, const json& cfg)> build;
};

json common_defaults() {
    return json{
        {"schema_version", kSchemaVersion},
        {"name", ""},
        {"description", ""},
        {"family", ""},
        {"params", json::object()},
        {"x0", json::array({0.0})},
        {"horizon", 1.0},
        {"steps", 64},
        {"controls", json::array({json::array({0.0})})},
        {"atoms", json::array()},
        {"policy_control", 0},
        {"n_paths", 10000},
        {"basis", {{"kind", "polynomial"}, {"degree", 3}, {"cells", 16}, {"local_degree", 1},
                   {"lower", json::array()}, {"upper", json::array()}}},
        {"picard", false},
        {"value", {{"mode", "auto"}, {"decision_stride", 0}, {"budget", 1e6},
                   {"explore_lower", json::array()}, {"explore_upper", json::array()}, {"dpp_split", 0}}},
        {"pde", {{"enabled", false}, {"lower", json::array()}, {"upper", json::array()}, {"dx", 1.0 / 64.0},
                 {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}}},
        {"probe", {{"lower", json::array({-3.0})}, {"upper", json::array({3.0})}, {"samples", 200},
                   {"lyapunov_radius", 5.0}, {"lyapunov_points", 401}}},
        {"mollify", {{"levels", json::array({4, 8, 16})}, {"order", 16}}},
        {"projection", {{"levels", json::array({json::array({2, 1}), json::array({4, 2}), json::array({8, 4})})}}},
        {"export_paths", 1000},
        {"seed", 20240601},
    };
}

json atom(double mark, double weight, double rho) {
    return json{{"mark", json::array({mark})}, {"weight", weight}, {"rho", rho}};
}

std::map<std::string, Family> make_registry() {
    std::map<std::string, Family> reg;

    {
        Family f;
        f.description = "all coefficients zero; every value is 0";
        f.defaults = common_defaults();
        f.defaults["params"] = json::object();
        f.build = [](Scenario& s, const json&) {
            s.reference = [](double, const Vec&) { return 0.0; };
            s.reference_mean_terminal = s.x0;
        };
        reg["zero"] = f;
    }
    {
        Family f;
        f.description = "b = c, sigma = g = 0, h(x) = x; Euler is exact";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"drift", 1.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const double c = cfg["params"]["drift"].get<double>();
            const Eigen::Index n = s.cs.n;
            s.cs.drift = [c, n](double, const Vec&, const Vec&, const NoiseHistory&) { return Vec::Constant(n, c); };
            s.cs.terminal = [](const Vec& x, const NoiseHistory&) { return x.sum(); };
            const double T = s.T;
            s.reference = [c, T, n](double t, const Vec& x) { return x.sum() + static_cast<double>(n) * c * (T - t); };
            s.reference_mean_terminal = s.x0.array() + c * T;
        };
        reg["constant-drift"] = f;
    }
    {
        Family f;
        f.description = "geometric jump-diffusion, linear recursive cost with jump term; closed-form mean and cost";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"mu", 0.05}, {"sigma", 0.2}, {"a", -0.05}, {"c", 0.1}, {"l", 1.0}};
        f.defaults["x0"] = json::array({1.0});
        f.defaults["atoms"] = json::array({atom(-0.2, 0.25, 0.2), atom(-0.1, 0.5, 0.1), atom(0.1, 0.5, 0.1),
                                           atom(0.2, 0.5, 0.2)});
        f.defaults["n_paths"] = 100000;
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({0.25})}, {"upper", json::array({4.0})},
                             {"dx", 1.0 / 32.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const json& p = cfg["params"];
            const double mu = p["mu"].get<double>(), sig = p["sigma"].get<double>();
            const double a = p["a"].get<double>(), c = p["c"].get<double>(), l = p["l"].get<double>();
            if (s.cs.n != 1) schema("geometric-jump is one-dimensional");
            s.cs.drift = [mu](double, const Vec& x, const Vec&, const NoiseHistory&) { return Vec(mu * x); };
            s.cs.diffusion = [sig](double, const Vec& x, const Vec&, const NoiseHistory&) {
                return Mat::Constant(1, 1, sig * x(0));
            };
            s.cs.jump = [](double, const Vec& e, const Vec& x, const Vec&, const NoiseHistory&) {
                return Vec(e(0) * x);
            };
            s.cs.generator = [a, c](double, const Vec&, const Vec&, double y, const Vec&, double k,
                                    const NoiseHistory&) { return a * y + c * k; };
            s.cs.terminal = [](const Vec& x, const NoiseHistory&) { return x(0); };
            s.cs.jump_weight = [l](double, const Vec&) { return l; };
            const double tilt = s.mm.quadrature([&](std::size_t i) { return s.mm.atom(i).mark(0); });
            const double rate = mu + a + c * l * tilt;
            const double T = s.T;
            s.reference = [rate, T](double t, const Vec& x) { return x(0) * std::exp(rate * (T - t)); };
            s.reference_mean_terminal = Vec(s.x0 * std::exp(mu * T));
        };
        reg["geometric-jump"] = f;
    }
    {
        Family f;
        f.description = "f = a y, h constant, driftless jump-diffusion; Y(0) = h exp(a T)";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"a", 0.5}, {"sigma", 0.3}, {"h", 1.0}};
        f.defaults["atoms"] = json::array({atom(-0.3, 0.5, 0.3), atom(0.3, 0.5, 0.3)});
        f.defaults["n_paths"] = 100000;
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({-2.0})}, {"upper", json::array({2.0})},
                             {"dx", 1.0 / 32.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const json& p = cfg["params"];
            const double a = p["a"].get<double>(), sig = p["sigma"].get<double>(), h = p["h"].get<double>();
            const Eigen::Index n = s.cs.n, d = s.cs.d;
            s.cs.diffusion = [sig, n, d](double, const Vec&, const Vec&, const NoiseHistory&) {
                return Mat(sig * Mat::Identity(n, d));
            };
            s.cs.jump = [n](double, const Vec& e, const Vec&, const Vec&, const NoiseHistory&) {
                return Vec(Vec::Constant(n, e(0)));
            };
            s.cs.generator = [a](double, const Vec&, const Vec&, double y, const Vec&, double, const NoiseHistory&) {
                return a * y;
            };
            s.cs.terminal = [h](const Vec&, const NoiseHistory&) { return h; };
            const double T = s.T;
            s.reference = [a, h, T](double t, const Vec&) { return h * std::exp(a * (T - t)); };
            s.reference_mean_terminal = s.x0;
        };
        reg["linear-bsde"] = f;
    }
    {
        Family f;
        f.description = "b = u with u in {-1, 1}, sigma constant, h(x) = x^2; bang-bang steering";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"sigma", 0.2}};
        f.defaults["x0"] = json::array({1.0});
        f.defaults["controls"] = json::array({json::array({-1.0}), json::array({1.0})});
        f.defaults["n_paths"] = 100000;
        f.defaults["basis"] = {{"kind", "local-partition"}, {"degree", 3}, {"cells", 32}, {"local_degree", 1},
                               {"lower", json::array()}, {"upper", json::array()}};
        f.defaults["value"] = {{"mode", "feedback"}, {"decision_stride", 1}, {"budget", 1e6},
                               {"explore_lower", json::array({-1.0})}, {"explore_upper", json::array({2.6})},
                               {"dpp_split", 0}};
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({-2.0})}, {"upper", json::array({4.0})},
                             {"dx", 1.0 / 64.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const double sig = cfg["params"]["sigma"].get<double>();
            if (s.cs.n != 1 || s.cs.k != 1) schema("two-control-1d needs one-dimensional state and control");
            s.cs.drift = [](double, const Vec&, const Vec& u, const NoiseHistory&) { return Vec(u); };
            s.cs.diffusion = [sig](double, const Vec&, const Vec&, const NoiseHistory&) {
                return Mat::Constant(1, 1, sig);
            };
            s.cs.terminal = [](const Vec& x, const NoiseHistory&) { return x(0) * x(0); };
        };
        reg["two-control-1d"] = f;
    }
    {
        Family f;
        f.description = "pure heat equation with Gaussian terminal; Gaussian-convolution closed form";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"sigma", 0.5}, {"variance", 0.25}};
        f.defaults["n_paths"] = 100000;
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({-2.0})}, {"upper", json::array({2.0})},
                             {"dx", 1.0 / 64.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const double sig = cfg["params"]["sigma"].get<double>();
            const double v0 = cfg["params"]["variance"].get<double>();
            const Eigen::Index n = s.cs.n;
            if (s.cs.d != n) schema("heat-reduction needs d = n");
            s.cs.diffusion = [sig, n](double, const Vec&, const Vec&, const NoiseHistory&) {
                return Mat(sig * Mat::Identity(n, n));
            };
            s.cs.terminal = [v0](const Vec& x, const NoiseHistory&) { return std::exp(-x.squaredNorm() / (2 * v0)); };
            const double T = s.T;
            s.reference = [sig, v0, T, n](double t, const Vec& x) {
                const double v = v0 + sig * sig * (T - t);
                return std::pow(v0 / v, 0.5 * static_cast<double>(n)) * std::exp(-x.squaredNorm() / (2 * v));
            };
            s.reference_mean_terminal = s.x0;
            s.pure_diffusion_scale = sig;
        };
        reg["heat-reduction"] = f;
    }
    {
        Family f;
        f.description = "single-atom compound Poisson transport with small diffusion; series closed form";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"sigma", 0.1}, {"terminal", "sin"}};
        f.defaults["atoms"] = json::array({atom(0.5, 1.0, 0.5)});
        f.defaults["n_paths"] = 100000;
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({-4.0})}, {"upper", json::array({4.0})},
                             {"dx", 1.0 / 64.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const double sig = cfg["params"]["sigma"].get<double>();
            const std::string term = cfg["params"]["terminal"].get<std::string>();
            if (term != "sin" && term != "linear") schema("params.terminal: expected 'sin' or 'linear'");
            if (s.cs.n != 1) schema("jump-transport is one-dimensional");
            s.cs.diffusion = [sig](double, const Vec&, const Vec&, const NoiseHistory&) {
                return Mat::Constant(1, 1, sig);
            };
            s.cs.jump = [](double, const Vec& e, const Vec&, const Vec&, const NoiseHistory&) { return Vec(e); };
            const bool lin = term == "linear";
            s.cs.terminal = [lin](const Vec& x, const NoiseHistory&) { return lin ? x(0) : std::sin(x(0)); };
            const double T = s.T;
            if (lin) {
                s.reference = [](double, const Vec& x) { return x(0); };
            } else if (s.mm.size() == 1) {
                const double v = s.mm.atom(0).mark(0), lam = s.mm.atom(0).weight;
                s.reference = [v, lam, sig, T](double t, const Vec& x) {
                    const double tau = T - t;
                    const double mean = lam * tau;
                    double acc = 0.0;
                    for (int k = 0; k < 200; ++k) {
                        const double w = mean > 0 ? poisson_pmf(k, mean) : (k == 0 ? 1.0 : 0.0);
                        acc += w * std::sin(x(0) + v * k - mean * v);
                        if (k > mean && w < 1e-18) break;
                    }
                    return acc * std::exp(-0.5 * sig * sig * tau);
                };
            }
            s.reference_mean_terminal = s.x0;
        };
        reg["jump-transport"] = f;
    }
    {
        Family f;
        f.description = "Lipschitz coefficients with a kink at the origin; mollification target";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"drift", 0.5}, {"sigma0", 0.3}, {"sigma1", 0.1}, {"a", 0.1}};
        f.defaults["x0"] = json::array({0.5});
        f.defaults["atoms"] = json::array({atom(-0.2, 0.5, 0.2), atom(0.2, 0.5, 0.2)});
        f.defaults["n_paths"] = 20000;
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({-3.0})}, {"upper", json::array({3.0})},
                             {"dx", 1.0 / 32.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const json& p = cfg["params"];
            const double c = p["drift"].get<double>(), s0 = p["sigma0"].get<double>();
            const double s1 = p["sigma1"].get<double>(), a = p["a"].get<double>();
            const Eigen::Index n = s.cs.n, d = s.cs.d;
            s.cs.drift = [c, n](double, const Vec& x, const Vec&, const NoiseHistory&) {
                return Vec(Vec::Constant(n, -c * abs1(x)));
            };
            s.cs.diffusion = [s0, s1, n, d](double, const Vec& x, const Vec&, const NoiseHistory&) {
                return Mat((s0 + s1 * abs1(x)) * Mat::Identity(n, d));
            };
            s.cs.jump = [n](double, const Vec& e, const Vec& x, const Vec&, const NoiseHistory&) {
                return Vec(Vec::Constant(n, e(0) * abs1(x)));
            };
            s.cs.generator = [a](double, const Vec& x, const Vec&, double y, const Vec&, double,
                                 const NoiseHistory&) { return abs1(x) + a * y; };
            s.cs.terminal = [](const Vec& x, const NoiseHistory&) { return abs1(x); };
        };
        reg["lipschitz-kink"] = f;
    }
    {
        Family f;
        f.description = "linear dynamics, quadratic running and terminal costs, five controls";
        f.defaults = common_defaults();
        f.defaults["params"] = {{"a", -0.5}, {"b", 1.0}, {"sigma", 0.3}, {"q", 1.0}, {"r", 0.5}, {"y", -0.1}};
        f.defaults["x0"] = json::array({1.0});
        f.defaults["controls"] = json::array({json::array({-1.0}), json::array({-0.5}), json::array({0.0}),
                                              json::array({0.5}), json::array({1.0})});
        f.defaults["atoms"] = json::array({atom(0.2, 0.5, 0.2)});
        f.defaults["steps"] = 32;
        f.defaults["n_paths"] = 20000;
        f.defaults["basis"] = {{"kind", "polynomial"}, {"degree", 4}, {"cells", 16}, {"local_degree", 1},
                               {"lower", json::array()}, {"upper", json::array()}};
        f.defaults["value"] = {{"mode", "feedback"}, {"decision_stride", 4}, {"budget", 1e6},
                               {"explore_lower", json::array({-1.5})}, {"explore_upper", json::array({2.0})},
                               {"dpp_split", 0}};
        f.defaults["pde"] = {{"enabled", true}, {"lower", json::array({-3.0})}, {"upper", json::array({3.0})},
                             {"dx", 1.0 / 32.0}, {"time_steps", 0}, {"extrapolation_order", 1}, {"collar", 0.0}};
        f.build = [](Scenario& s, const json& cfg) {
            const json& p = cfg["params"];
            const double a = p["a"].get<double>(), b = p["b"].get<double>(), sig = p["sigma"].get<double>();
            const double q = p["q"].get<double>(), r = p["r"].get<double>(), ay = p["y"].get<double>();
            if (s.cs.n != 1 || s.cs.k != 1) schema("lq-like needs one-dimensional state and control");
            s.cs.drift = [a, b](double, const Vec& x, const Vec& u, const NoiseHistory&) {
                return Vec::Constant(1, a * x(0) + b * u(0));
            };
            s.cs.diffusion = [sig](double, const Vec&, const Vec&, const NoiseHistory&) {
                return Mat::Constant(1, 1, sig);
            };
            s.cs.jump = [](double, const Vec& e, const Vec&, const Vec&, const NoiseHistory&) { return Vec(e); };
            s.cs.generator = [q, r, ay](double, const Vec& x, const Vec& u, double y, const Vec&, double,
                                        const NoiseHistory&) { return q * x(0) * x(0) + r * u(0) * u(0) + ay * y; };
            s.cs.terminal = [](const Vec& x, const NoiseHistory&) { return x(0) * x(0); };
        };
        reg["lq-like"] = f;
    }
    for (auto& [name, fam] : reg) {
        fam.defaults["family"] = name;
        fam.defaults["name"] = name;
        fam.defaults["description"] = fam.description;
    }
    return reg;
}

const std::map<std::string, Family>& registry() {
    static const std::map<std::string, Family> reg = make_registry();
    return reg;
}

BasisKind parse_kind(const std::string& s) {
    if (s == "polynomial") return BasisKind::Polynomial;
    if (s == "local-partition") return BasisKind::LocalPartition;
    schema("basis.kind: expected 'polynomial' or 'local-partition'");
}

ValueMode parse_mode(const std::string& s) {
    if (s == "auto") return ValueMode::Auto;
    if (s == "open-loop") return ValueMode::OpenLoop;
    if (s == "feedback") return ValueMode::Feedback;
    schema("value.mode: expected 'auto', 'open-loop' or 'feedback'");
}

Vec opt_box(const json& j, const std::string& where, Eigen::Index n) {
    const Vec v = to_vec(j, where);
    if (v.size() != 0 && v.size() != n) schema(where + ": expected " + std::to_string(n) + " entries");
    return v;
}

Scenario resolve(const json& doc) {
    if (!doc.is_object()) schema("scenario must be a JSON object");
    if (!doc.contains("family") || !doc["family"].is_string()) schema("missing string key 'family'");
    const std::string fam_name = doc["family"].get<std::string>();
    const auto& reg = registry();
    const auto it = reg.find(fam_name);
    if (it == reg.end()) schema("unknown family '" + fam_name + "'");
    const Family& fam = it->second;

    json cfg = fam.defaults;
    merge(cfg, doc, "");
    if (cfg["schema_version"].get<int>() != kSchemaVersion)
        schema("unsupported schema_version " + cfg["schema_version"].dump());

    Scenario s;
    s.family = fam_name;
    s.name = cfg["name"].get<std::string>();
    s.description = cfg["description"].get<std::string>();
    s.x0 = to_vec(cfg["x0"], "x0");
    const Eigen::Index n = s.x0.size();
    if (n < 1) schema("x0 must be nonempty");
    s.T = num(cfg["horizon"], "horizon");
    if (!(s.T > 0.0)) schema("horizon must be positive");
    s.steps = count(cfg["steps"], "steps");
    if (s.steps == 0) schema("steps must be positive");

    // controls
    const json& ctl = cfg["controls"];
    if (!ctl.is_array() || ctl.empty()) schema("controls must be a nonempty array");
    std::vector<Vec> controls;
    for (std::size_t i = 0; i < ctl.size(); ++i) controls.push_back(to_vec(ctl[i], "controls"));
    const Eigen::Index k = controls.front().size();
    for (const Vec& u : controls)
        if (u.size() != k || k == 0) schema("controls: inconsistent dimensions");
    s.policy_control = count(cfg["policy_control"], "policy_control");
    if (s.policy_control >= controls.size()) schema("policy_control out of range");

    // atoms
    std::vector<Atom> atoms;
    for (const json& a : cfg["atoms"]) {
        if (!a.is_object()) schema("atoms: expected objects");
        for (auto f = a.begin(); f != a.end(); ++f)
            if (f.key() != "mark" && f.key() != "weight" && f.key() != "rho")
                schema("unknown key 'atoms." + f.key() + "'");
        if (!a.contains("mark") || !a.contains("weight")) schema("atoms need 'mark' and 'weight'");
        atoms.push_back({to_vec(a["mark"], "atoms.mark"), num(a["weight"], "atoms.weight"),
                         a.contains("rho") ? num(a["rho"], "atoms.rho") : 0.0});
    }
    try {
        s.mm = MarkMeasure(atoms);
    } catch (const Error& e) {
        schema(std::string("atoms: ") + e.what());
    }

    s.cs = base_set(n, n, k);
    s.cs.controls = controls;

    s.n_paths = count(cfg["n_paths"], "n_paths");
    if (s.n_paths == 0) schema("n_paths must be positive");
    const json& b = cfg["basis"];
    s.bsde.basis.kind = parse_kind(b["kind"].get<std::string>());
    s.bsde.basis.degree = static_cast<int>(count(b["degree"], "basis.degree"));
    s.bsde.basis.cells = static_cast<int>(count(b["cells"], "basis.cells"));
    s.bsde.basis.local_degree = static_cast<int>(count(b["local_degree"], "basis.local_degree"));
    if (s.bsde.basis.cells < 1 || s.bsde.basis.local_degree > 1) schema("basis: cells >= 1, local_degree 0 or 1");
    s.bsde.basis.lower = opt_box(b["lower"], "basis.lower", n);
    s.bsde.basis.upper = opt_box(b["upper"], "basis.upper", n);
    s.bsde.picard = cfg["picard"].get<bool>();

    const json& v = cfg["value"];
    s.value.mode = parse_mode(v["mode"].get<std::string>());
    s.value.decision_stride = count(v["decision_stride"], "value.decision_stride");
    s.value.budget = num(v["budget"], "value.budget");
    s.value.explore_lower = opt_box(v["explore_lower"], "value.explore_lower", n);
    s.value.explore_upper = opt_box(v["explore_upper"], "value.explore_upper", n);
    s.value.dpp_split = count(v["dpp_split"], "value.dpp_split");
    if (s.value.decision_stride > 0 && s.steps % s.value.decision_stride != 0)
        schema("value.decision_stride must divide steps");

    const json& pd = cfg["pde"];
    s.pde.enabled = pd["enabled"].get<bool>();
    s.pde.lower = opt_box(pd["lower"], "pde.lower", n);
    s.pde.upper = opt_box(pd["upper"], "pde.upper", n);
    s.pde.dx = num(pd["dx"], "pde.dx");
    s.pde.time_steps = count(pd["time_steps"], "pde.time_steps");
    s.pde.extrapolation_order = static_cast<int>(count(pd["extrapolation_order"], "pde.extrapolation_order"));
    s.pde.collar = num(pd["collar"], "pde.collar");
    if (s.pde.enabled) {
        if (s.pde.lower.size() != n || s.pde.upper.size() != n) schema("pde box must match the state dimension");
        if (n > 2) schema("pde: spatial dimension is capped at 2");
        if (!(s.pde.dx > 0.0)) schema("pde.dx must be positive");
        if (s.pde.extrapolation_order < 1 || s.pde.extrapolation_order > 2)
            schema("pde.extrapolation_order must be 1 or 2");
    }

    const json& pr = cfg["probe"];
    s.probe.lower = to_vec(pr["lower"], "probe.lower");
    s.probe.upper = to_vec(pr["upper"], "probe.upper");
    if (s.probe.lower.size() == 1 && n > 1) s.probe.lower = Vec::Constant(n, s.probe.lower(0));
    if (s.probe.upper.size() == 1 && n > 1) s.probe.upper = Vec::Constant(n, s.probe.upper(0));
    if (s.probe.lower.size() != n || s.probe.upper.size() != n) schema("probe box must match the state dimension");
    s.probe.samples = count(pr["samples"], "probe.samples");
    s.probe.lyapunov_radius = num(pr["lyapunov_radius"], "probe.lyapunov_radius");
    s.probe.lyapunov_points = count(pr["lyapunov_points"], "probe.lyapunov_points");
    if (s.probe.samples == 0 || s.probe.lyapunov_points < 2 || !(s.probe.lyapunov_radius > 0))
        schema("probe: samples >= 1, lyapunov_points >= 2, lyapunov_radius > 0");

    s.approx.levels.clear();
    for (const json& l : cfg["mollify"]["levels"]) {
        const auto lv = static_cast<int>(count(l, "mollify.levels"));
        if (lv < 1) schema("mollify.levels must be >= 1");
        s.approx.levels.push_back(lv);
    }
    s.approx.quadrature_order = static_cast<int>(count(cfg["mollify"]["order"], "mollify.order"));
    if (s.approx.quadrature_order < 2 || s.approx.quadrature_order > 64) schema("mollify.order must be in [2, 64]");
    s.approx.projection.clear();
    for (const json& l : cfg["projection"]["levels"]) {
        if (!l.is_array() || l.size() != 2) schema("projection.levels: expected [N, M] pairs");
        s.approx.projection.emplace_back(static_cast<int>(count(l[0], "projection.levels")),
                                         static_cast<int>(count(l[1], "projection.levels")));
    }
    s.export_paths = count(cfg["export_paths"], "export_paths");
    s.seed = cfg["seed"].get<std::uint64_t>();

    fam.build(s, cfg);
    s.cs.validate();
    s.canonical = cfg.dump();
    return s;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> list_builtin() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, fam] : registry()) out.emplace_back(name, fam.description);
    return out;
}

Scenario load_scenario_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        schema(std::string("invalid JSON: ") + e.what());
    }
    try {
        return resolve(doc);
    } catch (const json::exception& e) {
        schema(std::string("scenario: ") + e.what());
    }
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario_json(ss.str());
}

Scenario builtin_scenario(const std::string& name) {
    if (registry().count(name) == 0) schema("unknown built-in scenario '" + name + "'");
    return load_scenario_json(json{{"family", name}}.dump());
}

Scenario load_scenario(const std::string& file_or_name) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(file_or_name, ec)) return load_scenario_file(file_or_name);
    return builtin_scenario(file_or_name);
}

ValueOptions value_options(const Scenario& s) {
    ValueOptions o;
    o.mode = s.value.mode;
    o.budget = s.value.budget;
    o.explore_lower = s.value.explore_lower;
    o.explore_upper = s.value.explore_upper;
    o.bsde = s.bsde;
    return o;
}

PolicyFamily policy_family(const Scenario& s, const TimeGrid& grid) {
    std::size_t stride = 0;
    if (s.value.decision_stride != 0) {
        // keep decision times fixed when the grid is refined or coarsened
        const double scaled = static_cast<double>(s.value.decision_stride) * static_cast<double>(grid.steps()) /
                              static_cast<double>(s.steps);
        stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(scaled)));
    }
    return PolicyFamily::uniform(grid, stride, s.cs.controls);
}

PdeOptions pde_options(const Scenario& s) {
    PdeOptions o;
    o.lower = s.pde.lower;
    o.upper = s.pde.upper;
    o.dx = s.pde.dx;
    o.time_steps = s.pde.time_steps;
    o.extrapolation_order = s.pde.extrapolation_order;
    o.collar = s.pde.collar;
    return o;
}

std::string registry_digest() {
    std::string listing;
    for (const auto& [name, fam] : registry()) listing += name + "\t" + fam.defaults.dump() + "\n";
    return sha256_hex(listing);
}

}  // namespace jumphjb
