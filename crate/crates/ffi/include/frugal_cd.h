#ifndef FRUGAL_CD_H
#define FRUGAL_CD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcdStatus {
  FCD_STATUS_OK = 0,
  FCD_STATUS_NULL_POINTER = 1,
  FCD_STATUS_INVALID_ARGUMENT = 2,
  FCD_STATUS_SHAPE = 3,
  FCD_STATUS_SINGULAR = 4,
  FCD_STATUS_TRAINING_DIVERGED = 5,
  FCD_STATUS_INSUFFICIENT_POOL = 6,
  FCD_STATUS_LABEL_MISMATCH = 7,
  FCD_STATUS_PHASE = 8,
  FCD_STATUS_PARSE = 9,
  FCD_STATUS_UNDEFINED_METRIC = 10,
  FCD_STATUS_NOT_FOUND = 11,
  FCD_STATUS_IO = 12,
  /**
   * Caller buffer too small; the required length was written.
   */
  FCD_STATUS_BUFFER_TOO_SMALL = 13,
  FCD_STATUS_PANIC = 14,
} FcdStatus;

typedef enum FcdPhase {
  FCD_PHASE_AWAITING_LABELS = 0,
  FCD_PHASE_READY = 1,
  FCD_PHASE_FINISHED = 2,
} FcdPhase;

/**
 * A loaded or generated dataset.
 */
typedef struct FcdDataset FcdDataset;

/**
 * An invertible network.
 */
typedef struct FcdNet FcdNet;

/**
 * An interactive labeling session.
 */
typedef struct FcdSession FcdSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call on the same thread.
 */
const char *fcd_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fcd_string_free(char *s);

/**
 * Generates a synthetic dataset. `config_json` may be null for defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be
 * writable.
 */
enum FcdStatus fcd_dataset_synth(const char *config_json, struct FcdDataset **out);

/**
 * Loads an FCD1 or CSV file (plus split sidecar, when present).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FcdStatus fcd_dataset_load(const char *path, struct FcdDataset **out);

/**
 * Writes FCD1, or CSV when the path ends in `.csv`.
 *
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
enum FcdStatus fcd_dataset_save(const struct FcdDataset *ds, const char *path);

/**
 * # Safety
 * `ds` must be a live handle; `len` and `dim` must be writable.
 */
enum FcdStatus fcd_dataset_shape(const struct FcdDataset *ds, size_t *len, size_t *dim);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void fcd_dataset_free(struct FcdDataset *ds);

/**
 * Orthonormally initialized network of width `dim` and `depth` layers.
 *
 * # Safety
 * `out` must be writable.
 */
enum FcdStatus fcd_net_random(size_t dim, size_t depth, uint64_t seed, struct FcdNet **out);

/**
 * # Safety
 * `net` must be a live handle; `dim` must be writable.
 */
enum FcdStatus fcd_net_dim(const struct FcdNet *net, size_t *dim);

/**
 * `out = f(x)`; both buffers hold `len == dim` values.
 *
 * # Safety
 * `x` and `out` must point to `len` doubles.
 */
enum FcdStatus fcd_net_forward(const struct FcdNet *net, const double *x, size_t len, double *out);

/**
 * `out = f⁻¹(z)` with exact layer inverses.
 *
 * # Safety
 * `z` and `out` must point to `len` doubles.
 */
enum FcdStatus fcd_net_inverse(const struct FcdNet *net, const double *z, size_t len, double *out);

/**
 * Change probability of `x`.
 *
 * # Safety
 * `x` must point to `len` doubles; `p` must be writable.
 */
enum FcdStatus fcd_net_classify(const struct FcdNet *net, const double *x, size_t len, double *p);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void fcd_net_free(struct FcdNet *net);

/**
 * Starts a session on `ds`. `config_json` may be null for defaults. The
 * session keeps its own reference to the dataset.
 *
 * # Safety
 * `ds` must be a live handle, `config_json` null or NUL-terminated, and
 * `out` writable.
 */
enum FcdStatus fcd_session_new(const struct FcdDataset *ds,
                               const char *config_json,
                               struct FcdSession **out);

/**
 * # Safety
 * `s` must be a live handle; `phase` and `iteration` must be writable.
 */
enum FcdStatus fcd_session_status(const struct FcdSession *s,
                                  enum FcdPhase *phase,
                                  size_t *iteration);

/**
 * Copies the pending display's sample ids into `ids` (capacity `cap`) and
 * writes their count to `len`. Returns `BufferTooSmall` with `len` set when
 * `cap` is short.
 *
 * # Safety
 * `ids` must hold `cap` values; `len` must be writable.
 */
enum FcdStatus fcd_session_display(const struct FcdSession *s,
                                   uint32_t *ids,
                                   size_t cap,
                                   size_t *len);

/**
 * Answers the pending display: `labels[i]` (−1 or +1) for `ids[i]`.
 * Retrains and writes the new evaluation EER to `eer` (NaN when undefined).
 *
 * # Safety
 * `ids` and `labels` must hold `n` values; `eer` may be null.
 */
enum FcdStatus fcd_session_submit(struct FcdSession *s,
                                  const uint32_t *ids,
                                  const int8_t *labels,
                                  size_t n,
                                  double *eer);

/**
 * Mean EER over the reported iterations so far.
 *
 * # Safety
 * `s` must be a live handle; `auc` must be writable.
 */
enum FcdStatus fcd_session_auc(const struct FcdSession *s, double *auc);

/**
 * Metrics history as JSON; release with [`fcd_string_free`].
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum FcdStatus fcd_session_metrics_json(const struct FcdSession *s, char **out);

/**
 * Copy of the session's current network.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum FcdStatus fcd_session_net(const struct FcdSession *s, struct FcdNet **out);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void fcd_session_free(struct FcdSession *s);

/**
 * Equal error rate in percent; `labels` are −1 / +1.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `eer` must be writable.
 */
enum FcdStatus fcd_compute_eer(const double *scores, const int8_t *labels, size_t n, double *eer);

/**
 * Mean of `n` per-iteration EERs.
 *
 * # Safety
 * `eers` must hold `n` values; `auc` must be writable.
 */
enum FcdStatus fcd_auc_of_eers(const double *eers, size_t n, double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRUGAL_CD_H */
