#ifndef HCHAIN_H
#define HCHAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every entry point.
typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_DOMAIN = 2,
  HC_STATUS_CONTRACT = 3,
  HC_STATUS_CONFIG = 4,
  HC_STATUS_NUMERICAL = 5,
  HC_STATUS_VERIFICATION = 6,
  HC_STATUS_BUFFER_TOO_SMALL = 7,
  HC_STATUS_PANIC = 8,
} HcStatus;

// Opaque block system for one coarse mode.
typedef struct HcBlockSystem HcBlockSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Builds the block system for coarse mode `mode` with ℳ = `groups`, clump size `d`,
// atom mass μ, spring frequency ω and N atoms per group.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum HcStatus hc_block_system_new(size_t mode,
                                  size_t groups,
                                  size_t d,
                                  double mass,
                                  double spring_frequency,
                                  double group_size,
                                  struct HcBlockSystem **out);

// Releases a handle. Null is accepted and ignored.
//
// # Safety
// `handle` must be null or a live pointer from [`hc_block_system_new`]; it must not be used afterwards.
void hc_block_system_free(struct HcBlockSystem *handle);

// Number of environment modes, d − 1.
//
// # Safety
// `handle` must be a live handle and `out` writable.
enum HcStatus hc_block_system_env_dim(const struct HcBlockSystem *handle, size_t *out);

// Coarse frequency Ω_L in the units of ω.
//
// # Safety
// `handle` must be a live handle and `out` writable.
enum HcStatus hc_block_system_coarse_frequency(const struct HcBlockSystem *handle, double *out);

// Reduced kinetic and potential coefficients, and the coupling row split into real and
// imaginary parts. `len` is the capacity of both coupling arrays and must be at least d − 1;
// the arrays may be null when d = 1.
//
// # Safety
// `handle` must be a live handle; non-null pointers must be writable for the stated lengths.
enum HcStatus hc_block_system_reduced_forms(const struct HcBlockSystem *handle,
                                            double *kinetic,
                                            double *potential,
                                            double *coupling_re,
                                            double *coupling_im,
                                            size_t len);

// Time-averaged noise strength S² of this block system, in units k_BTω²/(Nμ).
//
// # Safety
// `handle` must be a live handle and `out` writable.
enum HcStatus hc_block_system_noise_strength(const struct HcBlockSystem *handle, double *out);

// Equal-time decoherence kernel K_I(t, t) at temperature k_BT and reduced Planck constant ħ.
//
// # Safety
// `handle` must be a live handle and `out` writable.
enum HcStatus hc_block_system_kernel_trace(const struct HcBlockSystem *handle,
                                           double kbt,
                                           double hbar,
                                           double *out);

// S² for mode L at clump size d with ℳ groups, in units k_BTω²/(Nμ).
//
// # Safety
// `out` must be writable.
enum HcStatus hc_noise_strength(size_t mode, size_t d, size_t groups, double *out);

// 𝒦_I(d) for mode L in units N k_BT μ ω²/(4ħ²).
//
// # Safety
// `out` must be writable.
enum HcStatus hc_trace_measure(size_t mode, size_t d, size_t groups, double *out);

// Compares the closed-form reduced coefficients against a dense elimination. Writes the
// largest relative residual and whether every check met its tolerance.
//
// # Safety
// `max_residual` and `pass` must be writable.
enum HcStatus hc_check_reduced_forms(size_t mode,
                                     size_t d,
                                     size_t groups,
                                     size_t group_size,
                                     double mass,
                                     double *max_residual,
                                     bool *pass);

// Copies the calling thread's last error message into `buf` as a NUL-terminated string and
// returns the full message length excluding the terminator, or 0 when there is none.
// The copy is truncated when `len` is too small.
//
// # Safety
// `buf` must be null or writable for `len` bytes.
size_t hc_last_error_message(char *buf, size_t len);

// Static description of a status code.
const char *hc_status_string(enum HcStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HCHAIN_H */
