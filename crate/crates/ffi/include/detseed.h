#ifndef DETSEED_H
#define DETSEED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum DetseedStatus {
  DETSEED_STATUS_OK = 0,
  DETSEED_STATUS_NULL_POINTER = 1,
  DETSEED_STATUS_INVALID_UTF8 = 2,
  DETSEED_STATUS_INVALID_ARGUMENT = 3,
  DETSEED_STATUS_NUMERIC = 4,
  DETSEED_STATUS_IO = 5,
  DETSEED_STATUS_BUFFER_TOO_SMALL = 6,
  DETSEED_STATUS_NOT_FOUND = 7,
  DETSEED_STATUS_PANIC = 8,
} DetseedStatus;

// Opaque handle to a named parameter set.
typedef struct DetseedParams DetseedParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message on this thread as a NUL-terminated string.
// Returns the message length without the terminator; at most `cap - 1`
// bytes are written.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t detseed_last_error(char *buf, size_t cap);

// Builds a structured initialization from model spec text and a plan name
// (`mixed`, `dct`, `dst`, `hartley` or `hadamard`).
//
// # Safety
// `spec_text` and `plan` must be NUL-terminated strings; `out` must be
// writable. On success `*out` owns a handle for [`detseed_params_free`].
enum DetseedStatus detseed_init_from_spec(const char *spec_text,
                                          const char *plan,
                                          double fixup_alpha,
                                          struct DetseedParams **out);

// Loads a parameter directory written by `detseed_params_save`.
//
// # Safety
// `dir` must be a NUL-terminated path; `out` must be writable.
enum DetseedStatus detseed_params_load(const char *dir, struct DetseedParams **out);

// Writes one NPY file per parameter plus the digest file into `dir`.
//
// # Safety
// `params` must be a live handle; `dir` a NUL-terminated path.
enum DetseedStatus detseed_params_save(const struct DetseedParams *params, const char *dir);

// Releases a handle. Null is ignored.
//
// # Safety
// `params` must be null or a handle not yet freed.
void detseed_params_free(struct DetseedParams *params);

// Number of named tensors in the set.
//
// # Safety
// `params` must be a live handle and `count` writable.
enum DetseedStatus detseed_params_len(const struct DetseedParams *params, size_t *count);

// Copies the values of tensor `name` (row-major f32). `*len` receives the
// element count even when the buffer is too small.
//
// # Safety
// `buf` must be valid for `cap` floats; `len` may be null.
enum DetseedStatus detseed_params_get(const struct DetseedParams *params,
                                      const char *name,
                                      float *buf,
                                      size_t cap,
                                      size_t *len);

// Writes the 32-character canonical MD5 digest plus NUL into `buf`, which
// must hold at least 33 bytes.
//
// # Safety
// `buf` must be valid for `cap` bytes.
enum DetseedStatus detseed_params_digest(const struct DetseedParams *params, char *buf, size_t cap);

// Seed-free golden-ratio permutation of `n` samples keyed by their L1 norms.
//
// # Safety
// `l1_norms` must hold `n` floats and `out` must hold `n` indices.
enum DetseedStatus detseed_golden_permutation(const float *l1_norms,
                                              size_t n,
                                              uint64_t epoch,
                                              size_t *out);

// Seeded Fisher-Yates permutation of `0..n` for one epoch.
//
// # Safety
// `out` must hold `n` indices.
enum DetseedStatus detseed_seeded_permutation(size_t n, uint64_t seed, uint64_t epoch, size_t *out);

// Simplex ETF classifier weights, `num_classes x feature_dim` row-major.
//
// # Safety
// `out` must hold `num_classes * feature_dim` doubles.
enum DetseedStatus detseed_etf(size_t num_classes, size_t feature_dim, double *out, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DETSEED_H */
