/* schoolmerge C API.
 *
 * Handles are opaque and owned by the caller; free them with the matching
 * *_free function. Every function returns an sm_status; on failure the
 * message is available from sm_last_error() on the calling thread until the
 * next API call on that thread. Strings returned through char** outputs are
 * heap allocated and released with sm_string_free. JSON is UTF-8 text.
 */
#ifndef SCHOOLMERGE_H
#define SCHOOLMERGE_H

#include <stddef.h>

#if defined(SM_BUILDING_LIBRARY)
#define SM_API __attribute__((visibility("default")))
#else
#define SM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sm_status {
  SM_OK = 0,
  SM_ERR_PARSE = 1,              /* malformed input file or JSON */
  SM_ERR_VALIDATION = 2,         /* well-formed but violates an instance/plan invariant */
  SM_ERR_CONFIG = 3,             /* conflicting or invalid solve configuration */
  SM_ERR_MISSING_DATA = 4,       /* e.g. travel pairs absent from the matrix */
  SM_ERR_DEGENERATE = 5,         /* focal share of 0 or 1 district-wide */
  SM_ERR_IO = 6,                 /* file could not be read or written */
  SM_ERR_INSUFFICIENT_DATA = 7,  /* too few districts for a correlation */
  SM_ERR_ARGUMENT = 8,           /* null handle or pointer */
  SM_ERR_INTERNAL = 9
} sm_status;

typedef struct sm_instance sm_instance;
typedef struct sm_result sm_result;
typedef struct sm_server sm_server;

SM_API const char* sm_version(void);
SM_API const char* sm_status_name(sm_status status);
SM_API const char* sm_last_error(void);
/* For SM_ERR_CONFIG: the violated constraint name. For SM_ERR_MISSING_DATA: a
 * JSON array of the missing items. Empty otherwise. */
SM_API const char* sm_last_error_detail(void);
SM_API void sm_string_free(char* s);

/* Instances */
SM_API sm_status sm_instance_load(const char* path, sm_instance** out);
SM_API sm_status sm_instance_from_json(const char* json, sm_instance** out);
SM_API void sm_instance_free(sm_instance* instance);
/* {name, schools, district_ids, grade_domain, groups, focal_groups,
 *  baseline_d, gearys_c, warnings} */
SM_API sm_status sm_instance_summary(const sm_instance* instance, char** json_out);

/* Solving. config_json may be NULL for defaults; keys as in the plan file
 * "config" object (p_min, allow_triples, time_limit_s, seed, require, forbid,
 * objective, focal_groups, interdistrict, exact_max_schools, max_nodes, restarts). */
SM_API sm_status sm_solve(const sm_instance* instance, const char* config_json, sm_result** out);
SM_API void sm_result_free(sm_result* result);
/* {status, d_before, d_after, switchers, merged_clusters, wall_time_s} */
SM_API sm_status sm_result_summary(const sm_result* result, char** json_out);
/* Full plan file. include_timing = 0 drops wall time for byte-stable output. */
SM_API sm_status sm_result_plan(const sm_result* result, int include_timing, char** json_out);

/* Impact of a plan file (JSON text) on an instance. options_json may hold
 * "blocks" and "travel" (CSV paths, both or neither) and "opt_out_ratios".
 * Output: {"report": {...}, "summary_csv": "...", "block_flows_csv": "..." | null}. */
SM_API sm_status sm_impact(const sm_instance* instance, const char* plan_json, const char* options_json,
                           char** json_out);

/* Batch sweep from a scenario file; workers = 0 uses the file's setting.
 * Writes outputs under out_dir and returns
 * {"cells", "failed", "summary_csv", "correlations"} (paths). */
SM_API sm_status sm_sweep(const char* spec_path, size_t workers, const char* out_dir, char** json_out);

/* Correlation report from a sweep summary CSV (text). */
SM_API sm_status sm_correlate(const char* summary_csv, char** json_out);

/* Mergers vs. redistricting join. summary_csv is a sweep summary, and
 * redistricting_csv has district_id, delta_d_relative, percent_switching.
 * filter_json (may be NULL) selects one configuration: {"p_min", "objective"}.
 * Output: {"csv", "records", "unmatched_mergers", "unmatched_redistricting", "warnings"}. */
SM_API sm_status sm_crossover(const char* summary_csv, const char* redistricting_csv, const char* filter_json,
                              char** json_out);

/* HTTP service */
SM_API sm_status sm_server_create(const char* data_dir, size_t workers, sm_server** out);
/* port 0 picks a free port; the bound port is written to *bound_port. */
SM_API sm_status sm_server_bind(sm_server* server, const char* host, int port, int* bound_port);
/* Blocks until sm_server_stop is called from another thread. */
SM_API sm_status sm_server_run(sm_server* server);
SM_API void sm_server_stop(sm_server* server);
SM_API void sm_server_free(sm_server* server);

#ifdef __cplusplus
}
#endif

#endif /* SCHOOLMERGE_H */
