#ifndef POLADS_H
#define POLADS_H

/* Generated by cbindgen from crates/ffi. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a polads call. Anything other than `OK` leaves a message
 * in `polads_last_error`.
 */
typedef enum PoladsStatus {
  /**
   * The call succeeded.
   */
  POLADS_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  POLADS_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  POLADS_STATUS_INVALID_UTF8 = 2,
  /**
   * The configuration is invalid.
   */
  POLADS_STATUS_CONFIG = 3,
  /**
   * The input data is malformed or inconsistent.
   */
  POLADS_STATUS_DATA = 4,
  /**
   * A file could not be read or written.
   */
  POLADS_STATUS_IO = 5,
  /**
   * The model selector names no known model.
   */
  POLADS_STATUS_UNKNOWN_MODEL = 6,
  /**
   * An earlier pipeline stage has not run yet.
   */
  POLADS_STATUS_MISSING_UPSTREAM = 7,
  /**
   * A cached stage no longer matches its inputs or configuration.
   */
  POLADS_STATUS_STALE_CACHE = 8,
  /**
   * The output directory is locked by another run.
   */
  POLADS_STATUS_LOCKED = 9,
  /**
   * Training diverged or some seed runs failed.
   */
  POLADS_STATUS_TRAINING = 10,
  /**
   * An internal panic was caught at the boundary.
   */
  POLADS_STATUS_PANIC = 11,
} PoladsStatus;

/**
 * Pipeline stages in execution order.
 */
typedef enum PoladsStage {
  POLADS_STAGE_INGEST = 0,
  POLADS_STAGE_LABEL = 1,
  POLADS_STAGE_SPLIT = 2,
  POLADS_STAGE_PREPROCESS = 3,
  POLADS_STAGE_TRAIN = 4,
  POLADS_STAGE_EVALUATE = 5,
  POLADS_STAGE_ANALYZE = 6,
  POLADS_STAGE_REPORT = 7,
} PoladsStage;

/**
 * An owned pipeline configuration. Create one with a `polads_config_*`
 * constructor, adjust it with the setters, run stages against it, and
 * release it with `polads_config_free`.
 */
typedef struct PoladsConfig PoladsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *polads_version(void);

/**
 * Message from the most recent failed polads call on this thread, or
 * NULL if that call succeeded. The pointer stays valid until the next
 * polads call on the same thread; copy the string to keep it.
 */
const char *polads_last_error(void);

/**
 * A configuration with the built-in defaults. Returns NULL only on
 * internal failure.
 */
struct PoladsConfig *polads_config_new(void);

/**
 * Reads and validates a JSON configuration file. Missing fields take
 * their defaults. Returns NULL on failure.
 * # Safety
 * `path` must point to a NUL-terminated string.
 */
struct PoladsConfig *polads_config_from_file(const char *path);

/**
 * Parses and validates a configuration from a JSON string. Missing
 * fields take their defaults. Returns NULL on failure.
 * # Safety
 * `json` must point to a NUL-terminated string.
 */
struct PoladsConfig *polads_config_from_json(const char *json);

/**
 * Releases a configuration handle. NULL is allowed.
 * # Safety
 * `config` must have come from a `polads_config_*` constructor and
 * must not be used after this call. NULL is allowed.
 */
void polads_config_free(struct PoladsConfig *config);

/**
 * Points the configuration at the raw inputs: the ad dump (JSON lines),
 * the sponsor registry (CSV), and optionally a gazetteer of person
 * names (one per line; pass NULL to run without one).
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 * String arguments must be NUL-terminated; `gazetteer` may be NULL.
 */
enum PoladsStatus polads_config_set_inputs(struct PoladsConfig *config,
                                           const char *ads,
                                           const char *sponsors,
                                           const char *gazetteer);

/**
 * Sets the directory all stage outputs are written under.
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 * `dir` must point to a NUL-terminated string.
 */
enum PoladsStatus polads_config_set_out_dir(struct PoladsConfig *config, const char *dir);

/**
 * Selects the prediction task: "ideology" or "sponsor_type".
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 * `task` must point to a NUL-terminated string.
 */
enum PoladsStatus polads_config_set_task(struct PoladsConfig *config, const char *task);

/**
 * Selects the model. Valid selectors are the nine model names plus
 * "majority"; an unknown name fails with the full list in the message.
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 * `model` must point to a NUL-terminated string.
 */
enum PoladsStatus polads_config_set_model(struct PoladsConfig *config, const char *model);

/**
 * Runs one pipeline stage. Stages check their upstream artifacts, so
 * running them out of order fails with `MISSING_UPSTREAM` rather than
 * producing stale results.
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 */
enum PoladsStatus polads_run_stage(const struct PoladsConfig *config, enum PoladsStage stage);

/**
 * Runs every stage from ingest through analyze in order. The train
 * stage is skipped for the majority baseline, which has nothing to fit.
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 */
enum PoladsStatus polads_run_all(const struct PoladsConfig *config);

/**
 * Renders the metrics and correlation report for the configured task
 * and model into a newly allocated string. On success `*out` receives
 * the string; release it with `polads_string_free`.
 * # Safety
 * `config` must be a live handle from a `polads_config_*` constructor.
 * `out` must point to writable storage for one pointer.
 */
enum PoladsStatus polads_render_report(const struct PoladsConfig *config, char **out);

/**
 * Releases a string returned by this library. NULL is allowed.
 * # Safety
 * `s` must have come from `polads_render_report` and must not be
 * used after this call. NULL is allowed.
 */
void polads_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLADS_H */
