/* Generated by cbindgen from src/lib.rs during the build; do not edit. */

#ifndef IMPACT_H
#define IMPACT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum {
  IMPACT_STATUS_OK = 0,
  // A required pointer argument was null.
  IMPACT_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  IMPACT_STATUS_INVALID_UTF8 = 2,
  // The configuration could not be read or is invalid.
  IMPACT_STATUS_CONFIG = 3,
  // Building the abstraction failed.
  IMPACT_STATUS_ABSTRACTION = 4,
  // Interval iteration failed, including non-convergence.
  IMPACT_STATUS_SYNTHESIS = 5,
  // Reading or writing a file failed.
  IMPACT_STATUS_IO = 6,
  // An index or buffer length is out of range.
  IMPACT_STATUS_OUT_OF_RANGE = 7,
  // The arguments do not belong together (for example an abstraction
  // built from a different configuration).
  IMPACT_STATUS_MISMATCH = 8,
  // An internal error; the message describes it.
  IMPACT_STATUS_PANIC = 9,
} ImpactStatus;

// A validated problem configuration.
typedef struct ImpactConfig ImpactConfig;

// A synthesized controller with its probability bounds.
typedef struct ImpactController ImpactController;

// An interval MDP abstraction.
typedef struct ImpactImdp ImpactImdp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *impact_last_error(void);

// Library version as a static string.
const char *impact_version(void);

// Reads and validates a configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
ImpactStatus impact_config_load(const char *path, ImpactConfig **out);

// Validates a configuration given as text.
//
// # Safety
// `source` must be a NUL-terminated string and `out` a valid pointer.
ImpactStatus impact_config_parse(const char *source, ImpactConfig **out);

// Lattice sizes of the configured spaces; absent spaces report 0.
//
// # Safety
// `config` must be a live handle; the outputs may be null when not wanted.
ImpactStatus impact_config_sizes(const ImpactConfig *config,
                                 size_t *n_states,
                                 size_t *n_inputs,
                                 size_t *n_disturbances);

// # Safety
// `config` must be null or a handle not yet freed.
void impact_config_free(ImpactConfig *config);

// Builds the abstraction of a configuration. `workers` = 0 uses the
// configured worker count (all cores by default).
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
ImpactStatus impact_abstraction_build(const ImpactConfig *config,
                                      size_t workers_requested,
                                      ImpactImdp **out);

// Loads an abstraction directory written by [`impact_imdp_save`] or the
// command-line tool.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
ImpactStatus impact_imdp_load(const char *dir, ImpactImdp **out);

// Writes the abstraction's text files into `dir`, creating it if needed.
//
// # Safety
// `imdp` must be a live handle and `dir` a NUL-terminated string.
ImpactStatus impact_imdp_save(const ImpactImdp *imdp, const char *dir);

// Safe states, inputs and disturbances of an abstraction (inputs and
// disturbances are 1 when the space is absent); `rows` is their product.
//
// # Safety
// `imdp` must be a live handle; the outputs may be null when not wanted.
ImpactStatus impact_imdp_dims(const ImpactImdp *imdp,
                              size_t *n_states,
                              size_t *n_inputs,
                              size_t *n_disturbances,
                              size_t *rows);

// # Safety
// `imdp` must be null or a handle not yet freed.
void impact_imdp_free(ImpactImdp *imdp);

// Runs interval iteration for the configured specification and synthesis
// options. Abstractions without inputs are verified (the controller has no
// policy). `workers` = 0 uses the configured worker count.
//
// # Safety
// `config` and `imdp` must be live handles and `out` a valid pointer.
ImpactStatus impact_synthesize(const ImpactConfig *config,
                               const ImpactImdp *imdp,
                               size_t workers_requested,
                               ImpactController **out);

// Loads a controller file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
ImpactStatus impact_controller_load(const char *path, ImpactController **out);

// Writes a controller file.
//
// # Safety
// `controller` must be a live handle and `path` a NUL-terminated string.
ImpactStatus impact_controller_save(const ImpactController *controller, const char *path);

// Number of rows (safe states) in the controller table.
//
// # Safety
// `controller` must be a live handle and `len` a valid pointer.
ImpactStatus impact_controller_len(const ImpactController *controller, size_t *len);

// Row `index` of the table: the lattice index of the state and its lower
// and upper satisfaction probabilities.
//
// # Safety
// `controller` must be a live handle; the outputs may be null when not wanted.
ImpactStatus impact_controller_row(const ImpactController *controller,
                                   size_t index,
                                   size_t *state,
                                   double *p_min,
                                   double *p_max);

// Looks up the input for a continuous state `x` (length = state dims).
// `*found` is set to 0 when `x` lies in no safe cell of the table, or when
// the controller has no policy; otherwise the input is written to `u`,
// which must hold `u_len` values (at least the input dims).
//
// # Safety
// `x` must point to `x_len` values, `u` to `u_len` writable values and
// `found` must be valid.
ImpactStatus impact_controller_input(const ImpactController *controller,
                                     const double *x,
                                     size_t x_len,
                                     double *u,
                                     size_t u_len,
                                     int32_t *found);

// # Safety
// `controller` must be null or a handle not yet freed.
void impact_controller_free(ImpactController *controller);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPACT_H */
