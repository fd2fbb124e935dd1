#ifndef THINKSTOP_THINKSTOP_H
#define THINKSTOP_THINKSTOP_H

/*
 * thinkstop C interface.
 *
 * Every function returns a ts_status; on failure ts_last_error() holds a
 * message for the calling thread. Handles are opaque and owned by the caller
 * once returned; release them with the matching *_free function. Strings
 * returned by the library stay valid until the owning handle is freed or,
 * for ts_last_error, until the next call on the same thread.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(THINKSTOP_BUILDING_LIBRARY)
#    define TS_API __declspec(dllexport)
#  else
#    define TS_API __declspec(dllimport)
#  endif
#else
#  define TS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the exit codes of the thinkstop command. */
typedef enum ts_status {
  TS_OK = 0,
  TS_ERR_OTHER = 1,
  TS_ERR_CONFIG = 2,
  TS_ERR_DATA = 3,
  TS_ERR_ENDPOINT = 4,
  TS_ERR_ARGUMENT = 5
} ts_status;

TS_API const char* ts_version(void);
TS_API const char* ts_last_error(void);

typedef void (*ts_log_fn)(const char* line, void* user);

/* ---- trajectories and metrics ---- */

typedef struct ts_trajectory ts_trajectory;

/* task: "mcq", "numeric" or "tool_selection". labels[i] is A_i for
 * i = 0..steps-1 and cum_tokens[i] is T_i, with cum_tokens[0] == 0. */
TS_API ts_status ts_trajectory_create(const char* trace_id, const char* task, const char* const* labels,
                                      const int64_t* cum_tokens, size_t steps, ts_trajectory** out);

/* Search-query trajectory: embeddings holds steps * dim floats, one
 * unit-norm vector per step; query_texts may be NULL. */
TS_API ts_status ts_trajectory_create_queries(const char* trace_id, const float* embeddings, size_t dim,
                                              const char* const* query_texts, const int64_t* cum_tokens,
                                              size_t steps, ts_trajectory** out);

TS_API void ts_trajectory_free(ts_trajectory* traj);
TS_API size_t ts_trajectory_steps(const ts_trajectory* traj);

/* Label text of step i; NULL when i is out of range. */
TS_API const char* ts_trajectory_label(const ts_trajectory* traj, size_t step);

/* Hold-for-k smoothed copy. */
TS_API ts_status ts_trajectory_hold_for_k(const ts_trajectory* traj, double gamma, int k, ts_trajectory** out);

typedef struct ts_metrics_config {
  int k;        /* hold-for-k window; 0 means 3 */
  int flip_k;   /* transient-flip length bound; 0 means k */
  double gamma; /* query equivalence threshold; 0 means 0.9 */
} ts_metrics_config;

typedef struct ts_metrics {
  int64_t t_star_raw;
  int64_t t_star_denoised;
  int64_t switches_raw;
  int64_t switches_denoised;
  int64_t tafs;
  int64_t t_after_raw;
  int64_t t_after_denoised;
  int64_t t_total;
  double fraction_after_raw;
  double fraction_after_denoised;
} ts_metrics;

/* cfg may be NULL for defaults. */
TS_API ts_status ts_trajectory_metrics(const ts_trajectory* traj, const ts_metrics_config* cfg, ts_metrics* out);

/* ---- hidden-state dumps ---- */

typedef struct ts_dump ts_dump;

TS_API ts_status ts_dump_read(const char* path, ts_dump** out);
/* data holds steps * layers * dim floats, step-major, then layer. */
TS_API ts_status ts_dump_write(const char* path, uint32_t layers, uint32_t dim, uint32_t steps,
                               const float* data);
TS_API void ts_dump_free(ts_dump* dump);
TS_API void ts_dump_shape(const ts_dump* dump, uint32_t* layers, uint32_t* dim, uint32_t* steps);
TS_API const float* ts_dump_data(const ts_dump* dump);

/* ---- probes ---- */

typedef struct ts_probe ts_probe;

TS_API ts_status ts_probe_load(const char* path, ts_probe** out);
TS_API ts_status ts_probe_create(uint32_t layer, const double* w, size_t dim, double b, ts_probe** out);
TS_API ts_status ts_probe_save(const ts_probe* probe, const char* path);
TS_API void ts_probe_free(ts_probe* probe);
TS_API uint32_t ts_probe_layer(const ts_probe* probe);
TS_API size_t ts_probe_dim(const ts_probe* probe);

TS_API ts_status ts_probe_score(const ts_probe* probe, const double* h, size_t dim, double* out);

/* Scores every step of a dump at the probe's layer. scores must hold
 * ts_dump_shape's steps values. */
TS_API ts_status ts_probe_score_dump(const ts_probe* probe, const ts_dump* dump, double* scores, size_t capacity);

/* ---- gates ---- */

TS_API ts_status ts_random_gate_score(const char* trace_id, size_t step, uint64_t seed, double* out);

/* Smallest i with scores[i] >= tau, or -1 when none qualifies. */
TS_API ts_status ts_stop_index(const double* scores, size_t n, double tau, int64_t* out);

/* ---- pipelines ---- */

typedef struct ts_collect_options {
  const char* dataset;
  const char* endpoint_config;
  const char* out_dir;
  int max_inflight; /* 0: endpoint config value */
  uint64_t seed;
  int64_t sample; /* -1: every row, 0: default size per task, N: N rows per task */
  int keep_truncated;
} ts_collect_options;

typedef struct ts_collect_report {
  size_t collected;
  size_t skipped;
  size_t failed;
} ts_collect_report;

TS_API ts_status ts_collect(const ts_collect_options* opts, ts_collect_report* report, ts_log_fn log, void* user);

typedef struct ts_metrics_options {
  const char* traces; /* run directory or trajectory file */
  const char* out_dir;
  int k;
  int flip_k;
  double gamma;
  int include_truncated;
  int bootstrap_resamples; /* 0 means 10000 */
  double confidence;       /* 0 means 0.95 */
  uint64_t seed;
} ts_metrics_options;

TS_API ts_status ts_metrics_run(const ts_metrics_options* opts, ts_log_fn log, void* user);

typedef struct ts_probe_train_options {
  const char* const* traces;
  size_t n_traces;
  const char* const* dumps; /* one directory, or one per traces input */
  size_t n_dumps;
  uint64_t split_seed;
  const char* config; /* optional JSON file, may be NULL */
  const char* out_dir;
  int union_of_tasks;
} ts_probe_train_options;

TS_API ts_status ts_probe_train(const ts_probe_train_options* opts, ts_log_fn log, void* user);

typedef struct ts_probe_eval_options {
  const char* probe;
  const char* const* traces;
  size_t n_traces;
  const char* const* dumps;
  size_t n_dumps;
  const char* out; /* report file, may be NULL */
} ts_probe_eval_options;

TS_API ts_status ts_probe_eval(const ts_probe_eval_options* opts, ts_log_fn log, void* user);

typedef struct ts_frontier_options {
  const char* traces;
  const char* gate; /* "random", "probe" or "oracle" */
  const char* probe;
  const char* dumps;
  const char* tau_grid; /* NULL: "quantile" */
  const char* out_dir;
  uint64_t seed;
  double gamma;
  const char* split;  /* optional split file */
  const char* subset; /* NULL: "test" */
  int include_truncated;
} ts_frontier_options;

TS_API ts_status ts_frontier(const ts_frontier_options* opts, ts_log_fn log, void* user);

#ifdef __cplusplus
}
#endif

#endif
