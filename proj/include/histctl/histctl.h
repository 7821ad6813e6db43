/* C interface to the histctl library. Every function returns an hc_status;
 * on failure hc_last_error() describes the problem for the calling thread.
 * Strings returned through char** outputs are owned by the caller and must be
 * released with hc_string_free. */
#ifndef HISTCTL_H
#define HISTCTL_H

#include <stddef.h>

#if defined(HISTCTL_BUILDING_LIBRARY)
#define HC_API __attribute__((visibility("default")))
#else
#define HC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hc_status {
  HC_OK = 0,
  HC_ERR_INVALID_ARGUMENT = 1,
  HC_ERR_CONFIG = 2,
  HC_ERR_PARSE = 3,
  HC_ERR_VALIDATION = 4,
  HC_ERR_COMMON_SUPPORT = 5,
  HC_ERR_ESTIMATION = 6,
  HC_ERR_STAGE = 7,
  HC_ERR_IO = 8,
  HC_ERR_INTERNAL = 9
} hc_status;

typedef enum hc_scope {
  HC_SCOPE_BALANCE = 0,
  HC_SCOPE_ESTIMATE = 1,
  HC_SCOPE_PLACEBO = 2,
  HC_SCOPE_FULL = 3
} hc_scope;

typedef struct hc_session hc_session;

HC_API const char* hc_version(void);
HC_API const char* hc_status_name(hc_status status);
/* Message of the last failed call on this thread; "" when none. */
HC_API const char* hc_last_error(void);
HC_API void hc_string_free(char* s);

/* config_path may be NULL for built-in defaults. HISTCTL_OUT_DIR, when set,
 * replaces paths.out_dir. */
HC_API hc_status hc_session_create(const char* config_path, hc_session** out);
HC_API void hc_session_destroy(hc_session* session);
/* Overrides one dotted setting, e.g. ("balance.tolerance", "1e-9").
 * The key "force" toggles replacement of outputs written under another hash. */
HC_API hc_status hc_session_set(hc_session* session, const char* key, const char* value);
HC_API hc_status hc_session_config_json(const hc_session* session, char** out_json);
HC_API hc_status hc_session_config_hash(const hc_session* session, char** out_hash);

/* Pipeline commands. Outputs land in the configured output directory; the
 * JSON summaries are returned as well. */
HC_API hc_status hc_generate(hc_session* session, char** out_manifest_json);
HC_API hc_status hc_run(hc_session* session, hc_scope scope, char** out_summary_json);
HC_API hc_status hc_timeline(hc_session* session, const char* patient_id, char** out_text);
HC_API hc_status hc_report(hc_session* session, char** out_text);

/* Entropy balancing on a dense problem. features is n x k row-major, targets
 * has k entries, base_weights has n entries or is NULL for uniform.
 * weights_out receives n weights summing to w_total. */
HC_API hc_status hc_solve_dual(const double* features, size_t n, size_t k, const double* targets,
                               const double* base_weights, double w_total, double tol,
                               int max_iter, double* weights_out, double* max_violation,
                               int* converged);

HC_API hc_status hc_bonferroni_threshold(double overall, int family_size, double* out_threshold);

#ifdef __cplusplus
}
#endif

#endif /* HISTCTL_H */
