/* Copyright (c) The Move Contributors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef ROBUSTMOVE_H
#define ROBUSTMOVE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_ARGUMENT = 1,
  RM_STATUS_INVALID_UTF8 = 2,
  RM_STATUS_PARSE_ERROR = 3,
  RM_STATUS_INVARIANT_ERROR = 4,
  RM_STATUS_ANALYSIS_ERROR = 5,
  RM_STATUS_ORACLE_ERROR = 6,
  RM_STATUS_PANIC = 7,
} RmStatus;

/**
 * A parsed trusted code environment.
 */
typedef struct RmEnv RmEnv;

/**
 * An invariant resolved against an `RmEnv`.
 */
typedef struct RmInvariant RmInvariant;

/**
 * Oracle bounds. Value and address domains are the library defaults.
 */
typedef struct RmBounds {
  uint32_t max_instr;
  uint64_t fuel;
  uint32_t max_locals;
} RmBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *rm_last_error(void);

struct RmBounds rm_default_bounds(void);

/**
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RmStatus rm_env_parse(const char *source, struct RmEnv **out);

/**
 * # Safety
 * `env` must come from `rm_env_parse` and not be freed twice.
 */
void rm_env_free(struct RmEnv *env);

/**
 * Number of procedures in the environment.
 *
 * # Safety
 * `env` must be a live handle.
 */
size_t rm_env_proc_count(const struct RmEnv *env);

/**
 * # Safety
 * `env` must be a live handle, `source` a NUL-terminated string and `out`
 * a valid pointer.
 */
enum RmStatus rm_invariant_parse(const struct RmEnv *env,
                                 const char *source,
                                 struct RmInvariant **out);

/**
 * # Safety
 * `inv` must come from `rm_invariant_parse` and not be freed twice.
 */
void rm_invariant_free(struct RmInvariant *inv);

/**
 * Runs the escape analysis. `inv` may be NULL, in which case every field is
 * relevant and strict mode is used. On success `*flagged` holds the number
 * of flagged procedures and `*report` (if non-NULL) one `FLAG` line each.
 *
 * # Safety
 * Handles must be live; out pointers valid or NULL where allowed.
 */
enum RmStatus rm_analyze(const struct RmEnv *env,
                         const struct RmInvariant *inv,
                         bool strict,
                         size_t *flagged,
                         char **report);

/**
 * Runs well-formedness, analysis and the local prover. `*passed` is the
 * overall verdict; `*summary` (if non-NULL) has one line per stage.
 *
 * # Safety
 * Handles must be live; out pointers valid or NULL where allowed.
 */
enum RmStatus rm_check(const struct RmEnv *env,
                       const struct RmInvariant *inv,
                       struct RmBounds bounds,
                       bool *passed,
                       char **summary);

/**
 * Bounded search for an attacker. `*found` tells whether one exists;
 * `*attacker` (if non-NULL) receives its assembly, or NULL when none.
 *
 * # Safety
 * Handles must be live; out pointers valid or NULL where allowed.
 */
enum RmStatus rm_fuzz(const struct RmEnv *env,
                      const struct RmInvariant *inv,
                      struct RmBounds bounds,
                      bool *found,
                      char **attacker);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void rm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUSTMOVE_H */
