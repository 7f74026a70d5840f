#ifndef TALENTGRAPH_H
#define TALENTGRAPH_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum TgStatus {
  TG_STATUS_OK = 0,
  TG_STATUS_NULL_ARGUMENT = 1,
  TG_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad input data or configuration.
   */
  TG_STATUS_VALIDATION = 3,
  TG_STATUS_MISSING_INPUT = 4,
  TG_STATUS_RUNTIME = 5,
  /**
   * Another process holds the run directory.
   */
  TG_STATUS_LOCKED = 6,
  TG_STATUS_PANIC = 7,
} TgStatus;

/**
 * Graph topology loaded from a graph file.
 */
typedef struct TgGraph TgGraph;

/**
 * Trained model loaded from a checkpoint.
 */
typedef struct TgModel TgModel;

/**
 * Open, locked run directory.
 */
typedef struct TgRun TgRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *tg_last_error_message(void);

/**
 * Byte length of the last error message without the terminator; 0 if none.
 */
uintptr_t tg_last_error_length(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tg_version(void);

/**
 * Edge weight for overlap `j`: `max(1 - exp(-lambda * j) - theta, 0)`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum TgStatus tg_similarity(double j, double lambda, double theta, double *out);

/**
 * Opens and locks a run directory, creating it if needed.
 * `config_path` may be null for the default configuration.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum TgStatus tg_run_open(const char *dir, const char *config_path, struct TgRun **out);

/**
 * Runs one stage by its command-line name, e.g. `"build-graph"`.
 * Warnings from the call replace those of the previous one.
 *
 * # Safety
 * `run` must come from [`tg_run_open`]; `stage` must be NUL-terminated.
 */
enum TgStatus tg_run_stage(struct TgRun *run, const char *stage);

/**
 * Number of warnings raised by the last [`tg_run_stage`] call.
 *
 * # Safety
 * `run` must be null or come from [`tg_run_open`].
 */
uintptr_t tg_run_warning_count(const struct TgRun *run);

/**
 * Warning `index`, or null when out of range. Valid until the next
 * stage call on `run` or until it is closed.
 *
 * # Safety
 * `run` must be null or come from [`tg_run_open`].
 */
const char *tg_run_warning(const struct TgRun *run, uintptr_t index);

/**
 * Releases the lock and frees the handle. Null is ignored.
 *
 * # Safety
 * `run` must be null or come from [`tg_run_open`], and not be used again.
 */
void tg_run_close(struct TgRun *run);

/**
 * Loads graph topology from a graph file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum TgStatus tg_graph_load(const char *path, struct TgGraph **out);

/**
 * Number of candidate nodes; 0 for null.
 *
 * # Safety
 * `graph` must be null or come from [`tg_graph_load`].
 */
uintptr_t tg_graph_node_count(const struct TgGraph *graph);

/**
 * Undirected edge count of relation `category` (0 soft skills, 1 hard
 * skills, 2 industry sector, 3 education, 4 language skills).
 *
 * # Safety
 * `graph` must come from [`tg_graph_load`]; `out` must be writable.
 */
enum TgStatus tg_graph_edge_count(const struct TgGraph *graph, uint8_t category, uintptr_t *out);

/**
 * # Safety
 * `graph` must be null or come from [`tg_graph_load`], and not be used again.
 */
void tg_graph_free(struct TgGraph *graph);

/**
 * Loads a trained model checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum TgStatus tg_model_load(const char *path, struct TgModel **out);

/**
 * Number of per-selection heads; 0 for null.
 *
 * # Safety
 * `model` must be null or come from [`tg_model_load`].
 */
uintptr_t tg_model_selection_count(const struct TgModel *model);

/**
 * 1 for an ordinal head, 0 for multilabel or null.
 *
 * # Safety
 * `model` must be null or come from [`tg_model_load`].
 */
int32_t tg_model_is_ordinal(const struct TgModel *model);

/**
 * Total number of trainable parameters; 0 for null.
 *
 * # Safety
 * `model` must be null or come from [`tg_model_load`].
 */
uintptr_t tg_model_parameter_count(const struct TgModel *model);

/**
 * # Safety
 * `model` must be null or come from [`tg_model_load`], and not be used again.
 */
void tg_model_free(struct TgModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TALENTGRAPH_H */
