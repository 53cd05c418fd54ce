// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance suite. Drives the toolkit through the C interface
// exactly as the CLI does, then checks each report against oracles computed
// here rather than trusting the toolkit's own verdicts.
#include "jumphjb/jumphjb.h"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path g_root;

struct Verdict {
    bool passed = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

struct Run {
    json report;
    fs::path dir;
};

Run run(const std::string& command, const std::string& scenario) {
    const fs::path dir = g_root / (command + "__" + scenario);
    fs::remove_all(dir);
    int all = 0;
    const jumphjb_status st = jumphjb_run_named(command.c_str(), scenario.c_str(), dir.string().c_str(), -1, 0, &all);
    if (st != JUMPHJB_OK) throw std::runtime_error(command + " " + scenario + ": " + jumphjb_last_error());
    std::ifstream f(dir / "report.json");
    return {json::parse(f), dir};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream f(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        if (!line.empty() && line.back() == ',') row.emplace_back();
        rows.push_back(row);
    }
    return rows;
}

std::vector<std::string> builtin_names() {
    std::vector<std::string> out;
    std::stringstream ss(jumphjb_list());
    std::string name;
    while (std::getline(ss, name))
        if (!name.empty()) out.push_back(name);
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------

Verdict bsde_linear() {
    Verdict v;
    const json m = run("solve-bsde", "linear-bsde").report["metrics"]["linear-bsde"];
    const double oracle = std::exp(0.5);  // Y' = -0.5 Y, Y(1) = 1
    const double rel = std::abs(m["y0"].get<double>() - oracle) / oracle;
    v.detail = "Y0=" + num(m["y0"]) + " oracle=" + num(oracle) + " rel=" + num(rel);
    v.require(rel <= 0.01, "relative error above 1%");
    return v;
}

Verdict forward_moments() {
    Verdict v;
    const json m = run("simulate", "geometric-jump").report["metrics"]["geometric-jump"];
    // compensated jumps leave the mean on the drift alone
    const double oracle = 1.0 * std::exp(0.05 * 1.0);
    const double mean = m["mean_terminal"][0], se = m["se_terminal"][0];
    const double z = std::abs(mean - oracle) / se;
    const double slope = m["increment_slope"][0];
    v.detail = "mean=" + num(mean) + " oracle=" + num(oracle) + " z=" + num(z) + " slope_q2=" + num(slope);
    v.require(z <= 4.0, "terminal mean beyond 4 standard errors");
    v.require(slope >= 0.9 && slope <= 1.1, "increment slope outside [0.9, 1.1]");
    return v;
}

Verdict flow_property() {
    Verdict v;
    const json r = run("flow-check", "all").report;
    double worst = 0.0;
    std::size_t seen = 0;
    for (const std::string& name : builtin_names()) {
        if (!r["metrics"].contains(name)) {
            v.require(false, name + " not checked");
            continue;
        }
        const double dev = r["metrics"][name]["max_deviation"];
        worst = std::max(worst, dev);
        v.require(dev <= 1e-12, name + " deviates by " + num(dev));
        ++seen;
    }
    v.detail = std::to_string(seen) + " scenarios, max deviation " + num(worst);
    return v;
}

Verdict dpp_residual() {
    Verdict v;
    const Run r = run("dpp-check", "two-control-1d");
    const json m = r.report["metrics"]["two-control-1d"];
    const auto rows = read_csv(r.dir / "results.csv");
    // header, then dt = 1/32 and dt = 1/64
    v.require(rows.size() == 3 && rows[1][0] == "32" && rows[2][0] == "64", "unexpected step sizes");
    if (!v.passed) return v;
    const double full32 = std::stod(rows[1][3]), full64 = std::stod(rows[2][3]);
    const double res32 = std::stod(rows[1][7]), res64 = std::stod(rows[2][7]);
    const double se64 = std::stod(rows[2][8]);
    const double bound = 2.0 * se64 + std::abs(full64 - full32);
    v.detail = "residual(1/32)=" + num(res32) + " residual(1/64)=" + num(res64) + " bound=" + num(bound);
    v.require(res64 <= bound, "residual above 2 SE + allowance");
    v.require(res64 < res32, "residual did not decrease from 1/32 to 1/64");
    return v;
}

Verdict cross_method() {
    Verdict v;
    const json r = run("cross-check", "all").report;
    for (const std::string name : {"heat-reduction", "jump-transport", "two-control-1d"}) {
        const json& m = r["metrics"][name];
        const double pde_c = m["pde"][0], pde_f = m["pde"][1];
        const double mc_c = m["mc"][0], mc_f = m["mc"][1], se = m["mc_se"][1];
        const double allowance = std::abs(pde_f - pde_c) + std::abs(mc_f - mc_c) + 3.0 * se;
        const double gap = std::abs(pde_f - mc_f);
        v.detail += (v.detail.empty() ? "" : " ") + name + ":" + num(gap) + "<=" + num(allowance);
        v.require(gap <= allowance, name + " PDE and MC disagree");
    }
    return v;
}

// V(0, x) = E h(x + sigma W_T), trapezoid rule over the standard normal density
double heat_oracle(double x) {
    const double sig = 0.5, T = 1.0, v0 = 0.25;
    const double s = sig * std::sqrt(T);
    const int n = 4001;
    const double L = 10.0, h = 2 * L / (n - 1);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = -L + h * i;
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        acc += w * std::exp(-0.5 * z * z) * std::exp(-(x + s * z) * (x + s * z) / (2 * v0));
    }
    return acc * h / std::sqrt(2 * M_PI);
}

Verdict pde_oracle() {
    Verdict v;
    const Run r = run("solve-pde", "heat-reduction");
    const auto rows = read_csv(r.dir / "results.csv");
    double err = 0.0, scale = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double x = std::stod(rows[i][2]);
        if (std::abs(x) > 1.0 + 1e-12) continue;  // inner half of [-2, 2]
        const double o = heat_oracle(x);
        err = std::max(err, std::abs(std::stod(rows[i][3]) - o));
        scale = std::max(scale, std::abs(o));
        ++used;
    }
    const double rel = err / scale;
    const double all_nodes = r.report["metrics"]["heat-reduction"]["inner_sup_relative_error"];
    v.detail = "t=0 sup rel error " + num(rel) + " over " + std::to_string(used) + " nodes; all time nodes " +
               num(all_nodes) + "; dx=" + num(r.report["metrics"]["heat-reduction"]["dx"]);
    v.require(used > 0 && rel <= 0.01, "t=0 error above 1%");
    v.require(all_nodes <= 0.01, "error above 1% at some time node");
    return v;
}

Verdict comparison() {
    Verdict v;
    const json r = run("solve-pde", "all").report;
    std::size_t n = 0;
    for (const auto& [name, m] : r["metrics"].items()) {
        const json& c = m["comparison"];
        v.require(c["dominated"].get<bool>() && c["min_gap"].get<double>() >= 0.0,
                  name + " min gap " + num(c["min_gap"]));
        ++n;
    }
    v.require(n >= 6, "too few PDE scenarios");
    v.detail = std::to_string(n) + " scenarios, shifted subsolution dominated at every node";
    return v;
}

Verdict mollification() {
    Verdict v;
    const json m = run("mollify-report", "lipschitz-kink").report["metrics"]["lipschitz-kink"];
    const json& lv = m["levels"];
    auto maxof = [](const json& a) {
        double out = 0.0;
        for (const auto& x : a) out = std::max(out, x.get<double>());
        return out;
    };
    for (std::size_t k = 0; k + 1 < lv.size(); ++k) {
        const double l0 = lv[k]["level"], l1 = lv[k + 1]["level"];
        const double need = 0.8 * l1 / l0;
        const std::string tag = num(l0) + "->" + num(l1);
        const double rh = lv[k]["delta_h"].get<double>() / lv[k + 1]["delta_h"].get<double>();
        const double rf = maxof(lv[k]["delta_f"]) / maxof(lv[k + 1]["delta_f"]);
        const double ry = lv[k]["y0"].get<double>() / lv[k + 1]["y0"].get<double>();
        const double dl0 = maxof(lv[k]["delta_lambda"]), dl1 = maxof(lv[k + 1]["delta_lambda"]);
        v.detail += (v.detail.empty() ? "" : " ") + tag + " h:" + num(rh) + " f:" + num(rf) + " Y0:" + num(ry);
        v.require(rh >= need, "delta_h " + tag);
        v.require(rf >= need, "delta_f " + tag);
        if (dl0 > 1e-12) {
            v.detail += " lambda:" + num(dl0 / dl1);
            v.require(dl0 / dl1 >= need, "delta_lambda " + tag);
        } else {
            v.require(dl1 <= 1e-12, "delta_lambda grew from zero");
        }
        v.require(ry > 1.0, "bounding Y0 did not decrease " + tag);
    }
    return v;
}

Verdict lyapunov() {
    Verdict v;
    const json r = run("lyapunov-report", "all").report;
    std::size_t n = 0;
    for (const auto& [name, m] : r["metrics"].items()) {
        for (const char* p : {"p2", "p3"}) {
            const json& c = m[p]["c_phi"];
            if (!c[0].is_number() || !c[1].is_number()) {
                v.require(false, name + " " + p + " not finite");
                continue;
            }
            const double c1 = c[0], c2 = c[1];
            v.require(m[p]["nonfinite"] == 0, name + " " + p + " non-finite probes");
            v.require(std::abs(c2 - c1) <= 0.1 * std::abs(c1) + 1e-12, name + " " + p + " box-unstable");
        }
        ++n;
    }
    // heat-reduction is b = 0, g = 0, sigma = 0.5 I: L phi / phi = n c^2 / (1 + |x|^2) with c^2 folded in
    const json& heat = r["metrics"]["heat-reduction"];
    const double exact_err = heat.value("pure_diffusion_max_abs_error", 1.0);
    const double c_phi = heat["p2"]["c_phi"][0];
    v.require(exact_err <= 1e-10, "pure-diffusion ratio off by " + num(exact_err));
    v.require(std::abs(c_phi - 0.25) <= 1e-10, "pure-diffusion C_phi " + num(c_phi) + " != 0.25");
    v.require(n == builtin_names().size(), "not every scenario probed");
    v.detail = std::to_string(n) + " scenarios, pure-diffusion max error " + num(exact_err);
    return v;
}

Verdict penalty() {
    Verdict v;
    const Run r = run("penalty-report", "lq-like");
    const json& m = r.report["metrics"]["lq-like"];
    const double center = m["center"][0];
    const auto rows = read_csv(r.dir / "results.csv");
    double worst_g = 0.0, worst_h = 0.0, worst_eig = 1e300;
    std::set<std::string> ps;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double p = std::stod(rows[i][0]), x = std::stod(rows[i][2]) - center;
        ps.insert(rows[i][0]);
        worst_g = std::max(worst_g, std::stod(rows[i][4]));
        worst_h = std::max(worst_h, std::stod(rows[i][5]));
        const double bound = (p + 2.0) * std::pow(1.0 + x * x, p / 2.0);
        worst_eig = std::min(worst_eig, std::stod(rows[i][6]) - bound);
    }
    v.detail = std::to_string(rows.size() - 1) + " points, grad " + num(worst_g) + " hess " + num(worst_h) +
               " eig margin " + num(worst_eig);
    v.require(rows.size() - 1 == 200 && ps.size() == 2, "expected 100 points for each p");
    v.require(worst_g <= 1e-6, "gradient mismatch");
    v.require(worst_h <= 1e-6, "Hessian mismatch");
    v.require(worst_eig >= -1e-8, "eigenvalue bound violated");
    return v;
}

Verdict projection() {
    Verdict v;
    const json r = run("project-report", "geometric-jump").report;
    const json& res = r["metrics"]["geometric-jump"]["residual"];
    v.require(res.size() == 3, "expected three partitions");
    for (std::size_t k = 0; k < res.size(); ++k) {
        v.detail += (k ? " >= " : "rms ") + num(res[k]);
        if (k) v.require(res[k].get<double>() <= res[k - 1].get<double>(), "residual increased");
    }
    return v;
}

Verdict determinism() {
    Verdict v;
    std::size_t compared = 0;
    for (const std::string name : {"geometric-jump", "two-control-1d"}) {
        const Run r = run("determinism-check", name);
        for (const auto& [cmd, m] : r.report["metrics"].items()) {
            if (m.is_string()) continue;  // command not applicable to this scenario
            const fs::path a = r.dir / cmd / "a" / "results.csv", b = r.dir / cmd / "b" / "results.csv";
            std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
            const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
            v.require(!sa.empty() && sa == sb, name + " " + cmd + " differs");
            ++compared;
        }
    }
    v.require(compared >= 12, "too few commands compared");
    v.detail = std::to_string(compared) + " command runs byte-identical across thread counts";
    return v;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Verdict()> fn;
};

}  // namespace

int main(int argc, char** argv) {
    const char* root = std::getenv("JUMPHJB_ACCEPTANCE_DIR");
    g_root = root ? fs::path(root) : fs::temp_directory_path() / "jumphjb_acceptance";
    fs::create_directories(g_root);

    const std::vector<Criterion> all{
        {1, "BSDE exactness on linear-bsde", bsde_linear},
        {2, "forward moments on geometric-jump", forward_moments},
        {3, "flow property on every scenario", flow_property},
        {4, "DPP residual on two-control-1d", dpp_residual},
        {5, "PDE and Monte Carlo agreement", cross_method},
        {6, "heat-reduction PDE oracle", pde_oracle},
        {7, "comparison consequence", comparison},
        {8, "mollification decay on lipschitz-kink", mollification},
        {9, "Lyapunov constant", lyapunov},
        {10, "penalty function derivatives", penalty},
        {11, "projection monotonicity", projection},
        {12, "determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.fn();
        } catch (const std::exception& e) {
            v.passed = false;
            v.detail = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %2d: %s (%s) [%.1fs]\n", v.passed ? "PASS" : "FAIL", c.id, c.title,
                    v.detail.c_str(), secs);
        std::fflush(stdout);
        failed += v.passed ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
