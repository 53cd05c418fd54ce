// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/jumphjb.h"

#include "jumphjb/digest.hpp"
#include "jumphjb/harness.hpp"
#include "jumphjb/parallel.hpp"
#include "jumphjb/scenario.hpp"

#include <exception>
#include <string>

struct jumphjb_scenario {
    jumphjb::Scenario scenario;
    std::string hash;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_report;

jumphjb_status record(jumphjb::ErrorCode code, const std::string& message) {
    g_error = jumphjb::error_json(code, message);
    return static_cast<jumphjb_status>(jumphjb::exit_status(code));
}

template <class F>
jumphjb_status guarded(F&& f) {
    g_error.clear();
    try {
        f();
        return JUMPHJB_OK;
    } catch (const jumphjb::Error& e) {
        return record(e.code(), e.what());
    } catch (const std::exception& e) {
        return record(jumphjb::ErrorCode::Io, std::string("unexpected: ") + e.what());
    } catch (...) {
        return record(jumphjb::ErrorCode::Io, "unexpected non-standard exception");
    }
}

jumphjb_status run(jumphjb::RunRequest req, int* all_passed) {
    return guarded([&] {
        const jumphjb::RunSummary sum = jumphjb::run_command(req);
        g_report = sum.report_json;
        if (all_passed) *all_passed = sum.all_passed ? 1 : 0;
    });
}

}  // namespace

extern "C" {

const char* jumphjb_version(void) { return JUMPHJB_VERSION; }

const char* jumphjb_list(void) {
    static const std::string names = [] {
        std::string out;
        for (const auto& [name, desc] : jumphjb::list_builtin()) out += name + "\n";
        return out;
    }();
    return names.c_str();
}

jumphjb_status jumphjb_scenario_load(const char* file_or_name, jumphjb_scenario** out) {
    if (!out || !file_or_name) return record(jumphjb::ErrorCode::InvalidArgument, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto* h = new jumphjb_scenario{jumphjb::load_scenario(file_or_name), {}};
        h->hash = jumphjb::sha256_hex(h->scenario.canonical);
        *out = h;
    });
}

void jumphjb_scenario_free(jumphjb_scenario* s) { delete s; }

jumphjb_status jumphjb_scenario_set_seed(jumphjb_scenario* s, uint64_t seed) {
    if (!s) return record(jumphjb::ErrorCode::InvalidArgument, "null scenario");
    s->scenario.seed = seed;
    return JUMPHJB_OK;
}

const char* jumphjb_scenario_hash(const jumphjb_scenario* s) { return s ? s->hash.c_str() : ""; }

jumphjb_status jumphjb_set_threads(unsigned threads) {
    return guarded([&] { jumphjb::set_thread_count(threads); });
}

jumphjb_status jumphjb_run(const jumphjb_scenario* s, const char* command, const char* out_dir, int quick,
                           int* all_passed) {
    if (!s || !command || !out_dir) return record(jumphjb::ErrorCode::InvalidArgument, "null argument");
    jumphjb::RunRequest req;
    req.command = command;
    req.loaded = &s->scenario;
    req.out_dir = out_dir;
    req.quick = quick != 0;
    return run(req, all_passed);
}

jumphjb_status jumphjb_run_named(const char* command, const char* scenario, const char* out_dir, int64_t seed,
                                 int quick, int* all_passed) {
    if (!command || !out_dir) return record(jumphjb::ErrorCode::InvalidArgument, "null argument");
    jumphjb::RunRequest req;
    req.command = command;
    req.scenario = scenario ? scenario : "";
    req.out_dir = out_dir;
    if (seed >= 0) req.seed = static_cast<std::uint64_t>(seed);
    req.quick = quick != 0;
    return run(req, all_passed);
}

const char* jumphjb_last_report(void) { return g_report.c_str(); }

const char* jumphjb_last_error(void) { return g_error.c_str(); }

}  // extern "C"
