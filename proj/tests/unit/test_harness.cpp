// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "jumphjb/harness.hpp"
#include "jumphjb/parallel.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

using namespace jumphjb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "jumphjb_unit_harness" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunSummary quick(const std::string& cmd, const std::string& scenario, const fs::path& out, unsigned threads = 0,
                 std::optional<std::uint64_t> seed = std::nullopt) {
    RunRequest r;
    r.command = cmd;
    r.scenario = scenario;
    r.out_dir = out.string();
    r.quick = true;
    r.threads = threads;
    r.seed = seed;
    return run_command(r);
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("exit status classes") {
    CHECK(exit_status(ErrorCode::Schema) == 2);
    CHECK(exit_status(ErrorCode::InvalidArgument) == 2);
    CHECK(exit_status(ErrorCode::BlowUp) == 3);
    CHECK(exit_status(ErrorCode::StepTooLarge) == 3);
    CHECK(exit_status(ErrorCode::IllConditionedBasis) == 3);
    CHECK(exit_status(ErrorCode::EnumerationTooLarge) == 4);
    CHECK(exit_status(ErrorCode::Io) == 1);
    const auto j = nlohmann::json::parse(error_json(ErrorCode::EnumerationTooLarge, "too many"));
    CHECK(j["error"]["status"] == 4);
    CHECK(j["error"]["message"] == "too many");
}

TEST_CASE("registry listing") {
    const fs::path out = scratch("list");
    const RunSummary s = quick("list", "", out);
    CHECK(s.all_passed);
    CHECK(s.checks.size() == 3);
    const std::string csv = slurp(out / "results.csv");
    for (const char* name : {"zero", "constant-drift", "geometric-jump", "linear-bsde", "two-control-1d",
                             "heat-reduction", "jump-transport"})
        CHECK(csv.find(std::string("\n") + name + ",") != std::string::npos);
}

TEST_CASE("zero scenario paths stay put") {
    const fs::path out = scratch("zero");
    quick("simulate", "zero", out);
    std::ifstream f(out / "results.csv");
    std::string line;
    std::getline(f, line);
    CHECK(line == "path,node,t,x0");
    std::set<std::string> states;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        states.insert(line.substr(line.rfind(',') + 1));
        ++rows;
    }
    CHECK(rows > 0);
    CHECK(states.size() == 1);
}

TEST_CASE("bad requests map to configuration errors") {
    const fs::path out = scratch("bad");
    CHECK(code_of([&] { quick("no-such-command", "zero", out); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { quick("simulate", "all", out); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { quick("solve-pde", "zero", out); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { quick("simulate", "not-a-scenario", out); }) == ErrorCode::Schema);
}

TEST_CASE("outputs are byte-identical across reruns and thread counts") {
    const unsigned saved = thread_count();
    const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    quick("solve-bsde", "geometric-jump", a, 1);
    quick("solve-bsde", "geometric-jump", b, 3);
    quick("solve-bsde", "geometric-jump", c, 1, 7);
    set_thread_count(saved);
    CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "results.csv") != slurp(c / "results.csv"));

    const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(m["scenario_hashes"]["geometric-jump"].get<std::string>().size() == 64);
    CHECK(m["outputs"]["results.csv"].get<std::string>().size() == 64);
    CHECK(m.contains("timings_ms"));
    CHECK(slurp(a / "report.json").find("timings") == std::string::npos);
}

TEST_CASE("sweeping commands cover their scenario sets") {
    const fs::path out = scratch("sweep");
    const RunSummary s = quick("flow-check", "all", out);
    const auto r = nlohmann::json::parse(s.report_json);
    CHECK(r["scenarios"].size() >= 9);
    CHECK(s.all_passed);
}
