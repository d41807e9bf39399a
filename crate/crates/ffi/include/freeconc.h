#ifndef FREECONC_H
#define FREECONC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_UTF8 = 2,
  FC_STATUS_BUFFER_TOO_SMALL = 3,
  FC_STATUS_SHAPE = 10,
  FC_STATUS_NUMERIC = 11,
  FC_STATUS_DOMAIN = 12,
  FC_STATUS_UNBOUNDED = 13,
  FC_STATUS_CONVERGENCE = 14,
  FC_STATUS_ITERATION_LIMIT = 15,
  FC_STATUS_DEGENERATE = 16,
  FC_STATUS_ERGODICITY = 17,
  FC_STATUS_CONFIG = 18,
  FC_STATUS_IO = 19,
  FC_STATUS_PANIC = 99,
} FcStatus;

/**
 * Opaque block Markov chain specification.
 */
typedef struct FcBmcSpec FcBmcSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating if needed. Returns the full message
 * length without the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t fc_last_error_message(char *buf, size_t len);

/**
 * Parses a JSON configuration into a new handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FcStatus fc_bmc_spec_from_json(const char *json, struct FcBmcSpec **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `spec` must be null or a handle from [`fc_bmc_spec_from_json`] not yet freed.
 */
void fc_bmc_spec_free(struct FcBmcSpec *spec);

/**
 * Number of states `d` and number of clusters `K`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum FcStatus fc_bmc_spec_dims(const struct FcBmcSpec *spec, size_t *d, size_t *k);

/**
 * Variational norm value of the finite-`d` profile.
 *
 * # Safety
 * All pointers must be valid.
 */
enum FcStatus fc_bmc_mhat(const struct FcBmcSpec *spec, double *out);

/**
 * Right edge of the limiting singular value support.
 *
 * # Safety
 * All pointers must be valid.
 */
enum FcStatus fc_bmc_support_edge(const struct FcBmcSpec *spec, double *out);

/**
 * The exact parameter `frak d` of the spec.
 *
 * # Safety
 * All pointers must be valid.
 */
enum FcStatus fc_bmc_frakd(const struct FcBmcSpec *spec, double *out);

/**
 * Symmetrized limiting density at `n` points with smoothing `eps`.
 *
 * # Safety
 * `xs` and `out` must point to `n` values.
 */
enum FcStatus fc_bmc_density(const struct FcBmcSpec *spec,
                             const double *xs,
                             size_t n,
                             double eps,
                             double *out);

/**
 * Singular values, in descending order, of one simulated centered and
 * scaled frequency matrix. `out` must hold `d` values.
 *
 * # Safety
 * `out` must point to `len` writable values.
 */
enum FcStatus fc_bmc_sample_singular_values(const struct FcBmcSpec *spec,
                                            uint64_t seed,
                                            double *out,
                                            size_t len);

/**
 * Variational value `min_x max_i (1/x_i + sum_j c_ij x_j)` of a
 * nonnegative `n x n` coupling matrix in row-major order.
 *
 * # Safety
 * `c` must point to `n * n` values.
 */
enum FcStatus fc_minmax_coupling(const double *c, size_t n, double *out);

/**
 * `Psi` of the stationary chain of length `len` with the row-stochastic
 * `k x k` transition matrix `p` in row-major order.
 *
 * # Safety
 * `p` must point to `k * k` values.
 */
enum FcStatus fc_capital_psi(const double *p, size_t k, size_t len, size_t *out);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREECONC_H */
