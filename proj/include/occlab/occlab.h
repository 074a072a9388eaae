/* occlab C API: trace collection, leakage assessment, key ranking and KDE
 * export over the cache-occupancy simulator. Every call returns a status
 * code; on failure occlab_last_error() describes it. Handles are opaque and
 * owned by the caller until the matching _free call. */
#ifndef OCCLAB_H
#define OCCLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OCCLAB_API __declspec(dllexport)
#else
#define OCCLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum occlab_status {
  OCCLAB_OK = 0,
  OCCLAB_E_INVALID_ARGUMENT = 1,
  OCCLAB_E_CONFIG = 2,
  OCCLAB_E_IO = 3,
  OCCLAB_E_FORMAT = 4,
  OCCLAB_E_MISMATCH = 5, /* two trace files that cannot be compared */
  OCCLAB_E_CONTRACT = 6,
  OCCLAB_E_RUNTIME = 7
} occlab_status;

typedef struct occlab_config occlab_config;
typedef struct occlab_traces occlab_traces;
typedef struct occlab_ranking occlab_ranking;

/* Message for the last failed call on this thread; never NULL. */
OCCLAB_API const char* occlab_last_error(void);
OCCLAB_API const char* occlab_status_name(occlab_status status);
OCCLAB_API const char* occlab_version(void);

/* ---- run configuration ---- */

OCCLAB_API occlab_status occlab_config_new(occlab_config** out);
OCCLAB_API void occlab_config_free(occlab_config* config);
/* `key = value` lines, `#` comments; errors carry path:line. */
OCCLAB_API occlab_status occlab_config_load_file(occlab_config* config, const char* path);
/* `origin` labels diagnostics, e.g. "--traces"; may be NULL. */
OCCLAB_API occlab_status occlab_config_set(occlab_config* config, const char* key, const char* value,
                                           const char* origin);
OCCLAB_API occlab_status occlab_config_validate(const occlab_config* config);
/* Nonzero once a seed has been set. */
OCCLAB_API int occlab_config_has_seed(const occlab_config* config);

typedef void (*occlab_progress_fn)(uint64_t completed, uint64_t total, void* user);

typedef struct occlab_collect_stats {
  uint64_t traces;
  uint64_t prime_fallback_invalidations;
  uint64_t sae_events;
  uint64_t global_evictions;
  uint64_t victim_reads;
  uint64_t encryptions;
} occlab_collect_stats;

/* Runs the experiment and writes the trace CSV to the configured `out`.
 * `progress` and `stats` may be NULL. */
OCCLAB_API occlab_status occlab_collect(const occlab_config* config, occlab_progress_fn progress, void* user,
                                        occlab_collect_stats* stats);

/* ---- trace files ---- */

typedef struct occlab_trace_header {
  int format_version;
  const char* design;   /* valid while the handle lives */
  const char* geometry; /* valid while the handle lives */
  double occupancy_pct;
  const char* key_id; /* valid while the handle lives */
  uint64_t rng_seed;
} occlab_trace_header;

OCCLAB_API occlab_status occlab_traces_read(const char* path, occlab_traces** out);
OCCLAB_API void occlab_traces_free(occlab_traces* traces);
OCCLAB_API uint64_t occlab_traces_count(const occlab_traces* traces);
OCCLAB_API occlab_status occlab_traces_header(const occlab_traces* traces, occlab_trace_header* out);
/* Copies min(count, capacity) timings in file order. */
OCCLAB_API occlab_status occlab_traces_timings(const occlab_traces* traces, double* out, size_t capacity);

/* ---- analysis ---- */

typedef struct occlab_assessment {
  double t_statistic;
  double dof;
  double p_value;
  int leaks;
} occlab_assessment;

/* Pooled min-max scaling then Welch's t-test. Files whose geometry or design
 * headers differ give OCCLAB_E_MISMATCH. */
OCCLAB_API occlab_status occlab_assess(const occlab_traces* a, const occlab_traces* b, double threshold,
                                       occlab_assessment* out);

/* Scores all 16 x 256 key-byte candidates on the first `prefix` traces
 * (0 = all). Needs random-plaintext traces. */
OCCLAB_API occlab_status occlab_recover(const occlab_traces* traces, uint64_t prefix, occlab_ranking** out);
OCCLAB_API void occlab_ranking_free(occlab_ranking* ranking);
/* Best `n` candidates for `byte`, highest score first. */
OCCLAB_API occlab_status occlab_ranking_top(const occlab_ranking* ranking, int byte, int n, uint8_t* candidates,
                                            double* scores);
/* Rank of each true key byte (average over ties) and their log2 sum. */
OCCLAB_API occlab_status occlab_ranking_ge(const occlab_ranking* ranking, const uint8_t true_key[16],
                                           double ranks[16], double* ge_bits);

/* Gaussian KDE of the timing column. bandwidth <= 0 selects Silverman's rule.
 * `grid` and `density` must hold `grid_points` values. */
OCCLAB_API occlab_status occlab_kde(const occlab_traces* traces, double bandwidth, size_t grid_points,
                                    double* grid, double* density, double* bandwidth_used);

/* Writes two synthetic trace files of `n` records each whose timings are
 * gaussian and differ in mean by `shift` cycles. */
OCCLAB_API occlab_status occlab_synthetic_pair(const char* path_a, const char* path_b, uint64_t n, double shift,
                                               uint64_t seed);

/* 32 hex digits into 16 bytes. */
OCCLAB_API occlab_status occlab_parse_key(const char* hex, uint8_t out[16]);

#ifdef __cplusplus
}
#endif

#endif /* OCCLAB_H */
