#ifndef FSPIKE_H
#define FSPIKE_H

/* Generated by cbindgen from fspike-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call. Families match the CLI exit codes: usage and
// configuration problems, numerical failures, then I/O and format errors.
typedef enum FspikeStatus {
  FSPIKE_STATUS_OK = 0,
  FSPIKE_STATUS_USAGE = 1,
  FSPIKE_STATUS_NUMERICAL = 2,
  FSPIKE_STATUS_IO = 3,
} FspikeStatus;

// A trained or freshly initialized spiking network (opaque).
typedef struct FspikeNetwork FspikeNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The last error message raised on this thread, NUL-terminated. Never NULL;
// empty before the first failure. The pointer stays valid until the next
// failing fspike call on the same thread.
const char *fspike_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *fspike_version(void);

// Load a network checkpoint. Returns NULL on failure (see
// `fspike_last_error_message`). Free with `fspike_network_free`.
//
// # Safety
// `path` must be a NUL-terminated string.
struct FspikeNetwork *fspike_network_load(const char *path);

// Build a randomly initialized dense network. `dims` lists layer widths
// from input to output (at least two entries); `alpha` is the fractional
// order in (0, 1]. Returns NULL on failure.
//
// # Safety
// `dims` must point to `num_dims` readable entries.
struct FspikeNetwork *fspike_network_random(const size_t *dims,
                                            size_t num_dims,
                                            double alpha,
                                            uint64_t seed);

// Save the network as a checkpoint file.
//
// # Safety
// `net` must be a live handle; `path` must be NUL-terminated.
enum FspikeStatus fspike_network_save(const struct FspikeNetwork *net, const char *path);

// Release a handle returned by a constructor. NULL is a no-op.
//
// # Safety
// `net` must be NULL or a handle not freed before.
void fspike_network_free(struct FspikeNetwork *net);

// Input width of the first layer; 0 for NULL.
//
// # Safety
// `net` must be NULL or a live handle.
size_t fspike_network_in_dim(const struct FspikeNetwork *net);

// Output width of the last layer; 0 for NULL.
//
// # Safety
// `net` must be NULL or a live handle.
size_t fspike_network_out_dim(const struct FspikeNetwork *net);

// Number of weight layers; 0 for NULL.
//
// # Safety
// `net` must be NULL or a live handle.
size_t fspike_network_num_layers(const struct FspikeNetwork *net);

// Fractional order of the network; NaN for NULL.
//
// # Safety
// `net` must be NULL or a live handle.
double fspike_network_alpha(const struct FspikeNetwork *net);

// Encode one sample of `fspike_network_in_dim` intensities in [0, 1] as a
// Bernoulli spike train over `t_steps` steps, run it, and write the
// terminal per-class spike counts into `counts_out` (length
// `fspike_network_out_dim`).
//
// # Safety
// `intensities` must hold the input width; `counts_out` must have room for
// `counts_len >=` output width entries.
enum FspikeStatus fspike_network_infer(const struct FspikeNetwork *net,
                                       const double *intensities,
                                       size_t t_steps,
                                       uint64_t encode_seed,
                                       double *counts_out,
                                       size_t counts_len);

// Like `fspike_network_infer`, but writes only the argmax class index.
//
// # Safety
// `intensities` must hold the input width; `class_out` must be writable.
enum FspikeStatus fspike_network_classify(const struct FspikeNetwork *net,
                                          const double *intensities,
                                          size_t t_steps,
                                          uint64_t encode_seed,
                                          size_t *class_out);

// Evaluate the one-parameter Mittag-Leffler function E_alpha(z) for
// alpha in (0, 1] and finite z <= 0 or small positive z.
//
// # Safety
// `out` must be writable.
enum FspikeStatus fspike_mittag_leffler(double alpha, double z, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FSPIKE_H */
