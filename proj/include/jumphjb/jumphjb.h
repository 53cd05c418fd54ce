// SPDX-License-Identifier: Apache-2.0
/* C interface to the jumphjb toolkit. Every call returns a jumphjb_status;
 * details of the most recent failure on the calling thread are available
 * from jumphjb_last_error() as a JSON object. */
#ifndef JUMPHJB_H
#define JUMPHJB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define JUMPHJB_API __declspec(dllexport)
#else
#define JUMPHJB_API __attribute__((visibility("default")))
#endif

typedef enum jumphjb_status {
    JUMPHJB_OK = 0,
    JUMPHJB_ERR_OTHER = 1,     /* I/O and unexpected failures */
    JUMPHJB_ERR_CONFIG = 2,    /* schema or invalid argument */
    JUMPHJB_ERR_NUMERICAL = 3, /* blow-up, ill-conditioning, CFL, domain */
    JUMPHJB_ERR_BUDGET = 4     /* enumeration budget exceeded */
} jumphjb_status;

typedef struct jumphjb_scenario jumphjb_scenario;

JUMPHJB_API const char* jumphjb_version(void);

/* Newline-separated built-in scenario names. Owned by the library. */
JUMPHJB_API const char* jumphjb_list(void);

/* Loads a scenario file or built-in name. */
JUMPHJB_API jumphjb_status jumphjb_scenario_load(const char* file_or_name, jumphjb_scenario** out);
JUMPHJB_API void jumphjb_scenario_free(jumphjb_scenario* s);
JUMPHJB_API jumphjb_status jumphjb_scenario_set_seed(jumphjb_scenario* s, uint64_t seed);
/* SHA-256 of the canonical configuration. Owned by the handle. */
JUMPHJB_API const char* jumphjb_scenario_hash(const jumphjb_scenario* s);

/* Process-wide worker count; 0 restores the default. */
JUMPHJB_API jumphjb_status jumphjb_set_threads(unsigned threads);

/* Runs `command` on a loaded scenario and writes results.csv, report.json
 * and manifest.json into out_dir. *all_passed (optional) receives 1 when
 * every check in the report passed. */
JUMPHJB_API jumphjb_status jumphjb_run(const jumphjb_scenario* s, const char* command, const char* out_dir,
                                       int quick, int* all_passed);

/* As jumphjb_run, taking a file, built-in name or "all". seed < 0 keeps the
 * scenario seed. */
JUMPHJB_API jumphjb_status jumphjb_run_named(const char* command, const char* scenario, const char* out_dir,
                                             int64_t seed, int quick, int* all_passed);

/* report.json of the last successful run on this thread. */
JUMPHJB_API const char* jumphjb_last_report(void);
/* JSON error object for the last failure on this thread; "" when none. */
JUMPHJB_API const char* jumphjb_last_error(void);

#ifdef __cplusplus
}
#endif

#endif
