#ifndef ROUGHKIT_H
#define ROUGHKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result of a fallible call.
 */
typedef enum RkStatus {
  RK_STATUS_OK = 0,
  RK_STATUS_NULL_POINTER = 1,
  RK_STATUS_INVALID_ARGUMENT = 2,
  RK_STATUS_DOMAIN = 3,
  RK_STATUS_SINGULAR = 4,
  RK_STATUS_DIVERGENCE = 5,
  RK_STATUS_MODEL = 6,
  RK_STATUS_PARSE = 7,
  RK_STATUS_IO = 8,
  RK_STATUS_BUFFER_TOO_SMALL = 9,
  RK_STATUS_PANIC = 10,
} RkStatus;

/**
 * A sampled, piecewise-linear path.
 */
typedef struct RkPath RkPath;

/**
 * A level-2 rough path.
 */
typedef struct RkRoughPath RkRoughPath;

/**
 * A truncated signature.
 */
typedef struct RkSignature RkSignature;

/**
 * Message describing the most recent call on this thread; empty after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *rk_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rk_version(void);

/**
 * Builds a path from `n` times and `n * dim` row-major values.
 *
 * # Safety
 * `times` must point to `n` doubles, `values` to `n * dim` doubles and `out`
 * to writable storage for one handle.
 */
enum RkStatus rk_path_new(const double *times,
                          const double *values,
                          size_t n,
                          size_t dim,
                          struct RkPath **out);

/**
 * Releases a path. Null is ignored.
 *
 * # Safety
 * `path` must come from [`rk_path_new`] and not be used afterwards.
 */
void rk_path_free(struct RkPath *path);

/**
 * # Safety
 * `path` must be a live handle and `out_len`, `out_dim` writable.
 */
enum RkStatus rk_path_shape(const struct RkPath *path, size_t *out_len, size_t *out_dim);

/**
 * p-variation over partitions of the sample grid.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum RkStatus rk_path_p_variation(const struct RkPath *path, double p, double *out);

/**
 * Hölder seminorm of exponent `alpha` over sample pairs.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum RkStatus rk_path_holder_seminorm(const struct RkPath *path, double alpha, double *out);

/**
 * Signature of the whole path truncated at `level`.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum RkStatus rk_signature_new(const struct RkPath *path, size_t level, struct RkSignature **out);

/**
 * Releases a signature. Null is ignored.
 *
 * # Safety
 * `sig` must come from [`rk_signature_new`] and not be used afterwards.
 */
void rk_signature_free(struct RkSignature *sig);

/**
 * Coefficient of the word `letters[0..len]` (letters are `1..=dim`).
 *
 * # Safety
 * `sig` must be a live handle, `letters` must point to `len` values and
 * `out` must be writable.
 */
enum RkStatus rk_signature_coefficient(const struct RkSignature *sig,
                                       const uint16_t *letters,
                                       size_t len,
                                       double *out);

/**
 * Copies level `n` (row-major, `dim^n` values) into `out`. `written`
 * receives the required length even when the buffer is too small.
 *
 * # Safety
 * `sig` must be a live handle, `out` must have room for `cap` doubles and
 * `written` must be writable or null.
 */
enum RkStatus rk_signature_level(const struct RkSignature *sig,
                                 size_t n,
                                 double *out,
                                 size_t cap,
                                 size_t *written);

/**
 * Canonical level-2 lift of a path.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum RkStatus rk_rough_path_lift(const struct RkPath *path, struct RkRoughPath **out);

/**
 * Releases a rough path. Null is ignored.
 *
 * # Safety
 * `rp` must come from [`rk_rough_path_lift`] and not be used afterwards.
 */
void rk_rough_path_free(struct RkRoughPath *rp);

/**
 * Second level over `[s, t]` as a row-major `dim × dim` matrix.
 *
 * # Safety
 * `rp` must be a live handle, `out` must have room for `cap` doubles and
 * `written` must be writable or null.
 */
enum RkStatus rk_rough_path_second_level(const struct RkRoughPath *rp,
                                         double s,
                                         double t,
                                         double *out,
                                         size_t cap,
                                         size_t *written);

/**
 * Inhomogeneous p-variation (`holder == 0`) or Hölder (`holder != 0`)
 * distance between two rough paths on the same grid.
 *
 * # Safety
 * `a` and `b` must be live handles and `out` writable.
 */
enum RkStatus rk_rough_path_distance(const struct RkRoughPath *a,
                                     const struct RkRoughPath *b,
                                     double p,
                                     int32_t holder,
                                     double *out);

#endif  /* ROUGHKIT_H */
