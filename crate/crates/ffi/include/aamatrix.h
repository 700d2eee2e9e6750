#ifndef AAMATRIX_H
#define AAMATRIX_H

#pragma once

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AamStatus {
  AAM_STATUS_OK = 0,
  AAM_STATUS_NULL_ARGUMENT = 1,
  AAM_STATUS_INVALID_UTF8 = 2,
  AAM_STATUS_NOT_FOUND = 3,
  AAM_STATUS_INVALID_INPUT = 4,
  AAM_STATUS_RUN_FAILED = 5,
  AAM_STATUS_PANIC = 6,
} AamStatus;

/**
 * Opaque system profile.
 */
typedef struct AamProfile AamProfile;

/**
 * Opaque finished run.
 */
typedef struct AamRun AamRun;

typedef struct AamConfigCounts {
  uint64_t total_aspects;
  uint64_t single_options_per_aspect;
  uint64_t total_single_options;
} AamConfigCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *aam_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void aam_string_free(char *s);

/**
 * Display name of the matrix cell for the given level ordinals.
 *
 * # Safety
 * `out_name` must be a valid pointer.
 */
enum AamStatus aam_combination_name(uint8_t autonomy, uint8_t alignment, char **out_name);

/**
 * Configuration counts. The combined total is returned as a decimal string.
 *
 * # Safety
 * `counts` must point to `len` integers; `out` and `out_combined` must be valid pointers.
 */
enum AamStatus aam_configuration_counts(const int64_t *counts,
                                        size_t len,
                                        int64_t level_count,
                                        struct AamConfigCounts *out,
                                        char **out_combined);

/**
 * Number of builtin profiles.
 */
size_t aam_builtin_count(void);

/**
 * # Safety
 * `name` must be a nul-terminated string; `out` a valid pointer.
 */
enum AamStatus aam_profile_builtin(const char *name, struct AamProfile **out);

/**
 * Parses a JSON profile document.
 *
 * # Safety
 * `document` must be a nul-terminated string; `out` a valid pointer.
 */
enum AamStatus aam_profile_parse(const char *document, struct AamProfile **out);

/**
 * # Safety
 * `profile` must be null or a handle from this library, not yet freed.
 */
void aam_profile_free(struct AamProfile *profile);

/**
 * # Safety
 * `profile` must be a live handle; `out_name` a valid pointer.
 */
enum AamStatus aam_profile_name(const struct AamProfile *profile, char **out_name);

/**
 * Levels of the aspect at `aspect_index` in column order (0 = Decom .. 11 = Util).
 *
 * # Safety
 * `profile` must be a live handle; the out pointers must be valid.
 */
enum AamStatus aam_profile_levels(const struct AamProfile *profile,
                                  uint32_t aspect_index,
                                  uint8_t *out_autonomy,
                                  uint8_t *out_alignment);

/**
 * Conflicts of the profile as a JSON array.
 *
 * # Safety
 * `profile` must be a live handle; `out_json` a valid pointer.
 */
enum AamStatus aam_profile_conflicts_json(const struct AamProfile *profile, char **out_json);

/**
 * # Safety
 * `profile` must be a live handle; `out_svg` a valid pointer.
 */
enum AamStatus aam_profile_radar_svg(const struct AamProfile *profile, char **out_svg);

/**
 * L1 level distance between two profiles.
 *
 * # Safety
 * Both handles must be live; `out_distance` a valid pointer.
 */
enum AamStatus aam_profile_distance(const struct AamProfile *a,
                                    const struct AamProfile *b,
                                    uint32_t *out_distance);

/**
 * Markdown table over all builtin profiles.
 *
 * # Safety
 * `out_markdown` must be a valid pointer.
 */
enum AamStatus aam_builtin_table_markdown(char **out_markdown);

/**
 * Loads and runs a scenario file to completion.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` a valid pointer.
 */
enum AamStatus aam_run_scenario_file(const char *path, struct AamRun **out);

/**
 * Runs a scenario given as a JSON document. Its registry must be inline.
 *
 * # Safety
 * `document` must be a nul-terminated string; `out` a valid pointer.
 */
enum AamStatus aam_run_scenario_json(const char *document, struct AamRun **out);

/**
 * The outcome as a JSON object.
 *
 * # Safety
 * `run` must be a live handle; `out_json` a valid pointer.
 */
enum AamStatus aam_run_outcome_json(const struct AamRun *run, char **out_json);

/**
 * Number of actions in the run's log.
 *
 * # Safety
 * `run` must be a live handle; `out_count` a valid pointer.
 */
enum AamStatus aam_run_action_count(const struct AamRun *run, uint64_t *out_count);

/**
 * The event stream as NDJSON.
 *
 * # Safety
 * `run` must be a live handle; `out_ndjson` a valid pointer.
 */
enum AamStatus aam_run_events_ndjson(const struct AamRun *run, char **out_ndjson);

/**
 * # Safety
 * `run` must be null or a handle from this library, not yet freed.
 */
void aam_run_free(struct AamRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AAMATRIX_H */
