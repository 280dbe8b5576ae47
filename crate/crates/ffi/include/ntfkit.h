/* C interface for the ntfkit tensor toolkit. */

#ifndef NTFKIT_H
#define NTFKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every call. Matches the exit codes of the command line tool.
 */
typedef enum NtfStatus {
  NTF_STATUS_OK = 0,
  /*
   Arguments violate a documented requirement.
   */
  NTF_STATUS_INVALID_ARGUMENT = 2,
  /*
   Input data is malformed, inconsistent, or unreadable.
   */
  NTF_STATUS_DATA = 3,
  /*
   A computation lost numerical validity.
   */
  NTF_STATUS_NUMERICAL = 4,
} NtfStatus;

/*
 Fitted rank decomposition.
 */
typedef struct NtfModel NtfModel;

/*
 Dense non-negative third-order tensor.
 */
typedef struct NtfTensor NtfTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the most recent failure on this thread. The pointer
 stays valid until the next failing call on the same thread. Never null.
 */
const char *ntf_last_error_message(void);

/*
 Builds a fully observed tensor from a dense buffer of `i*j*k` values in
 storage order: index `[a][b][c]` lives at `a + i*(b + j*c)`.

 # Safety
 `values` must point to `len` readable doubles; `out` must be a valid
 destination for one pointer.
 */
enum NtfStatus ntf_tensor_new(size_t i,
                              size_t j,
                              size_t k,
                              const double *values,
                              size_t len,
                              struct NtfTensor **out);

/*
 Reads a tensor file produced by the toolkit. Missing cells are rejected;
 impute before export if the data has gaps.

 # Safety
 `path` must be a NUL-terminated string; `out` must be a valid destination
 for one pointer.
 */
enum NtfStatus ntf_tensor_read(const char *path, struct NtfTensor **out);

/*
 Writes the three dimensions of `tensor` to `i`, `j`, `k`.

 # Safety
 All pointers must be valid.
 */
enum NtfStatus ntf_tensor_dims(const struct NtfTensor *tensor, size_t *i, size_t *j, size_t *k);

/*
 Releases a tensor. Passing null is a no-op.

 # Safety
 `tensor` must have come from this library and not been freed before.
 */
void ntf_tensor_free(struct NtfTensor *tensor);

/*
 Fits a rank-`rank` non-negative decomposition with `restarts` seeded
 restarts and stores the winner. `tol` bounds the relative-error change
 per sweep; `relative_error` may be null if the caller does not want it.

 # Safety
 `tensor` must be a live handle; `out` must be a valid destination for one
 pointer; `relative_error`, when non-null, must be writable.
 */
enum NtfStatus ntf_fit(const struct NtfTensor *tensor,
                       size_t rank,
                       uint64_t seed,
                       size_t restarts,
                       size_t max_sweeps,
                       double tol,
                       struct NtfModel **out,
                       double *relative_error);

/*
 Number of components in the model.

 # Safety
 Both pointers must be valid.
 */
enum NtfStatus ntf_model_rank(const struct NtfModel *model, size_t *out);

/*
 Copies the component weights into `buf`, which holds `len` doubles; `len`
 must equal the rank.

 # Safety
 `model` must be live; `buf` must point to `len` writable doubles.
 */
enum NtfStatus ntf_model_lambda(const struct NtfModel *model, double *buf, size_t len);

/*
 Copies factor matrix `mode` (1, 2 or 3) into `buf` row-major: entry
 `(row, component)` lands at `row * rank + component`. `len` must equal
 `dim * rank` for that mode.

 # Safety
 `model` must be live; `buf` must point to `len` writable doubles.
 */
enum NtfStatus ntf_model_factor(const struct NtfModel *model, size_t mode, double *buf, size_t len);

/*
 Core consistency of `model` against `tensor`, in (-inf, 100].

 # Safety
 All pointers must be valid.
 */
enum NtfStatus ntf_corcondia(const struct NtfTensor *tensor,
                             const struct NtfModel *model,
                             double *out);

/*
 Releases a model. Passing null is a no-op.

 # Safety
 `model` must have come from this library and not been freed before.
 */
void ntf_model_free(struct NtfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTFKIT_H */
