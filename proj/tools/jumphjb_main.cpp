// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the toolkit only through the C interface.
#include "jumphjb/jumphjb.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

const char* kCommands[] = {"simulate",       "flow-check",      "solve-bsde",     "value",
                           "dpp-check",      "solve-pde",       "cross-check",    "mollify-report",
                           "lyapunov-report", "project-report", "penalty-report", "determinism-check",
                           "list"};

void print_checks(const std::string& report) {
    const auto j = nlohmann::json::parse(report, nullptr, false);
    if (j.is_discarded() || !j.contains("checks")) return;
    for (const auto& c : j["checks"])
        std::printf("%s %s\n", c["passed"].get<bool>() ? "PASS" : "FAIL", c["name"].get<std::string>().c_str());
    std::printf("%s\n", j.value("all_passed", false) ? "all checks passed" : "some checks failed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Controlled jump-diffusion toolkit"};
    app.set_version_flag("--version", std::string(jumphjb_version()));

    std::string command, scenario, out_dir;
    long long seed = -1;
    unsigned threads = 0;
    bool quick = false;
    std::string cmd_list;
    for (const char* c : kCommands) cmd_list += std::string(cmd_list.empty() ? "" : ", ") + c;
    app.add_option("command", command, "one of: " + cmd_list)->required();
    app.add_option("--scenario,-s", scenario, "scenario file, built-in name, or 'all'");
    app.add_option("--out,-o", out_dir, "output directory");
    app.add_option("--seed", seed, "override the scenario seed")->check(CLI::NonNegativeNumber);
    app.add_option("--threads,-j", threads, "worker threads (default: $JUMPHJB_THREADS or all cores)");
    app.add_flag("--quick", quick, "reduced sizes for fast reruns");
    CLI11_PARSE(app, argc, argv);

    if (threads == 0) {
        if (const char* env = std::getenv("JUMPHJB_THREADS")) threads = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    }
    if (threads > 0 && jumphjb_set_threads(threads) != JUMPHJB_OK) {
        std::cerr << jumphjb_last_error();
        return 2;
    }

    if (command == "list" && out_dir.empty()) {
        std::fputs(jumphjb_list(), stdout);
        return 0;
    }
    if (out_dir.empty()) {
        std::cerr << "--out is required\n";
        return 2;
    }

    int passed = 0;
    const jumphjb_status st =
        jumphjb_run_named(command.c_str(), scenario.c_str(), out_dir.c_str(), seed, quick ? 1 : 0, &passed);
    if (st != JUMPHJB_OK) {
        const std::string err = jumphjb_last_error();
        std::cerr << err;
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (!ec) std::ofstream(std::filesystem::path(out_dir) / "error.json") << err;
        return static_cast<int>(st);
    }
    print_checks(jumphjb_last_report());
    return 0;
}
