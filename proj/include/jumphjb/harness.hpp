// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jumphjb {

struct Scenario;

struct RunRequest {
    std::string command;
    /// Scenario file, built-in name, or "all" for the commands that sweep.
    std::string scenario;
    /// Already-loaded scenario; takes precedence over `scenario` when set.
    const Scenario* loaded = nullptr;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;  // 0: leave the process-wide setting alone
    /// Reduced sizes (paths, steps, grids) for fast reruns.
    bool quick = false;
};

struct CheckResult {
    std::string name;
    bool passed = false;
};

struct RunSummary {
    std::string report_json;  // contents of report.json
    std::vector<CheckResult> checks;
    bool all_passed = true;
};

/// Commands in the order `list` prints them.
std::vector<std::string> command_names();
/// One-line description of a command; empty when unknown.
std::string command_help(const std::string& command);

/// Process status for an error: 2 schema or configuration, 3 numerical
/// failure, 4 budget exceeded, 1 anything else.
int exit_status(ErrorCode code);
/// {"error": {"code": ..., "status": ..., "message": ...}}
std::string error_json(ErrorCode code, const std::string& message);

/// Executes one command and writes results.csv, report.json and
/// manifest.json into `out_dir` (created if needed). Throws jumphjb::Error.
RunSummary run_command(const RunRequest& request);

}  // namespace jumphjb
