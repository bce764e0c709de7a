#ifndef SONOMAP_H
#define SONOMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  SONOMAP_STATUS_OK = 0,
  SONOMAP_STATUS_NULL_POINTER = 1,
  SONOMAP_STATUS_INVALID_UTF8 = 2,
  SONOMAP_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Session JSON failed to parse or validate.
   */
  SONOMAP_STATUS_CONFIG = 4,
  SONOMAP_STATUS_UNKNOWN_SIGNAL = 5,
  /**
   * Mapping rejected: wrong direction, destination busy, unknown id.
   */
  SONOMAP_STATUS_MAPPING = 6,
  SONOMAP_STATUS_EXPRESSION = 7,
  SONOMAP_STATUS_BUFFER_TOO_SMALL = 8,
  SONOMAP_STATUS_PANIC = 99,
} SonomapStatus;

/**
 * Opaque engine handle.
 */
typedef struct SonomapEngine SonomapEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sonomap_last_error(void);

/**
 * Creates an engine from session JSON, or from defaults when
 * `session_json` is NULL.
 *
 * # Safety
 * `session_json` must be NULL or a NUL-terminated string; `out` must be
 * writable.
 */
SonomapStatus sonomap_engine_new(const char *session_json, SonomapEngine **out);

/**
 * Releases an engine. NULL is ignored.
 *
 * # Safety
 * `engine` must come from [`sonomap_engine_new`] and not be used afterwards.
 */
void sonomap_engine_free(SonomapEngine *engine);

/**
 * Feeds mono samples; every completed frame is processed. The number of
 * frames processed by this call is written to `frames` when non-NULL.
 *
 * # Safety
 * `samples` must point to `len` readable values.
 */
SonomapStatus sonomap_engine_push(SonomapEngine *engine,
                                  const float *samples,
                                  size_t len,
                                  size_t *frames);

/**
 * Number of registered signals.
 *
 * # Safety
 * `engine` must be a live handle.
 */
size_t sonomap_engine_signal_count(const SonomapEngine *engine);

/**
 * Signal id at `index` in catalog order, or NULL when out of range. Owned
 * by the engine.
 *
 * # Safety
 * `engine` must be a live handle.
 */
const char *sonomap_engine_signal_id(const SonomapEngine *engine, size_t index);

/**
 * Current value of one signal.
 *
 * # Safety
 * `id` must be a NUL-terminated string and `out` writable.
 */
SonomapStatus sonomap_engine_value(const SonomapEngine *engine, const char *id, double *out);

/**
 * Copies all values in catalog order into `out`, which must hold at least
 * `sonomap_engine_signal_count` entries.
 *
 * # Safety
 * `out` must point to `capacity` writable values.
 */
SonomapStatus sonomap_engine_values(const SonomapEngine *engine, double *out, size_t capacity);

/**
 * Index of the last processed frame, or -1 before the first.
 *
 * # Safety
 * `engine` must be a live handle.
 */
int64_t sonomap_engine_frame_index(const SonomapEngine *engine);

/**
 * Mapping table revision.
 *
 * # Safety
 * `engine` must be a live handle.
 */
uint64_t sonomap_engine_revision(const SonomapEngine *engine);

/**
 * Sets an automatable; the clamped value is written to `accepted` when
 * non-NULL.
 *
 * # Safety
 * `id` must be a NUL-terminated string.
 */
SonomapStatus sonomap_engine_set_automatable(SonomapEngine *engine,
                                             const char *id,
                                             double value,
                                             double *accepted);

/**
 * Adds a mapping from `n_sources` source ids to `destination`.
 *
 * # Safety
 * `sources` must point to `n_sources` NUL-terminated strings; the other
 * pointers must be NUL-terminated strings or writable as documented.
 */
SonomapStatus sonomap_engine_add_mapping(SonomapEngine *engine,
                                         const char *const *sources,
                                         size_t n_sources,
                                         const char *destination,
                                         const char *expression,
                                         uint64_t *id);

/**
 * Removes mapping `id`.
 *
 * # Safety
 * `engine` must be a live handle.
 */
SonomapStatus sonomap_engine_remove_mapping(SonomapEngine *engine, uint64_t id);

/**
 * Parses and evaluates an expression over `n_inputs` variables.
 *
 * # Safety
 * `text` must be a NUL-terminated string, `inputs` must point to
 * `n_inputs` values and `out` must be writable.
 */
SonomapStatus sonomap_expression_eval(const char *text,
                                      const double *inputs,
                                      size_t n_inputs,
                                      double *out);

/**
 * Encodes an OSC message with one float32 argument. The packet length is
 * written to `len`; if it exceeds `capacity`, nothing is copied and
 * `BufferTooSmall` is returned.
 *
 * # Safety
 * `address` must be a NUL-terminated string, `buf` must point to
 * `capacity` writable bytes and `len` must be writable.
 */
SonomapStatus sonomap_osc_encode_float(const char *address,
                                       float value,
                                       uint8_t *buf,
                                       size_t capacity,
                                       size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SONOMAP_H */
