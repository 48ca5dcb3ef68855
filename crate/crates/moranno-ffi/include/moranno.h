#ifndef MORANNO_H
#define MORANNO_H

/* Generated by cbindgen from moranno-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this API.
typedef enum MrnStatus {
  // The call succeeded.
  MRN_STATUS_OK = 0,
  // A required pointer argument was null.
  MRN_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  MRN_STATUS_INVALID_UTF8 = 2,
  // An argument value was out of range or inconsistent.
  MRN_STATUS_INVALID_ARGUMENT = 3,
  // A label string did not parse as an alternating mora/prosody
  // sequence over the default inventory.
  MRN_STATUS_PARSE_ERROR = 4,
  // The filesystem rejected a read or write.
  MRN_STATUS_IO_ERROR = 5,
  // A model rejected its input or a checkpoint was malformed.
  MRN_STATUS_MODEL_ERROR = 6,
  // A metric was undefined for the given inputs.
  MRN_STATUS_METRIC_ERROR = 7,
  // An unexpected internal failure; please report these.
  MRN_STATUS_INTERNAL = 8,
} MrnStatus;

// An acoustic feature matrix. Opaque; create with [`mrn_features_load`]
// and release with [`mrn_features_free`].
typedef struct MrnFeatures MrnFeatures;

// A loaded annotator model. Opaque; create with [`mrn_model_load`] and
// release with [`mrn_model_free`].
typedef struct MrnModel MrnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on the calling thread.
//
// The pointer stays valid until the next failing call on this thread; it
// is never null, and holds an empty string before the first failure.
// Do not free it.
const char *mrn_last_error_message(void);

// Loads a model checkpoint from `path` into `*out_model`.
//
// On success `*out_model` owns the model; release it with
// [`mrn_model_free`].
//
// # Safety
// `path` must be a valid NUL-terminated C string and `out_model` a valid
// pointer to writable memory.
enum MrnStatus mrn_model_load(const char *path, struct MrnModel **out_model);

// Releases a model. Passing null is a no-op.
//
// # Safety
// `model` must be null or a pointer returned by [`mrn_model_load`] that
// has not been freed yet.
void mrn_model_free(struct MrnModel *model);

// Writes the model's trainable parameter count to `*out_count`.
//
// # Safety
// `model` must be a live model handle and `out_count` a valid pointer.
enum MrnStatus mrn_model_param_count(const struct MrnModel *model, size_t *out_count);

// Writes the feature-frame width the model expects to `*out_dim`.
//
// # Safety
// `model` must be a live model handle and `out_dim` a valid pointer.
enum MrnStatus mrn_model_feature_dim(const struct MrnModel *model, size_t *out_dim);

// Annotates one utterance from a caller-owned feature buffer.
//
// `features` points at `n_frames * dim` doubles, row-major, one row per
// frame; `dim` must match [`mrn_model_feature_dim`]. `beam_width` of 0
// or 1 decodes greedily, larger values run a beam search of that width.
// On success `*out_labels` holds the annotation as a label string;
// release it with [`mrn_string_free`].
//
// # Safety
// `model` must be a live model handle, `features` must point at
// `n_frames * dim` readable doubles, and `out_labels` must be a valid
// pointer to writable memory.
enum MrnStatus mrn_model_annotate(const struct MrnModel *model,
                                  const double *features,
                                  size_t n_frames,
                                  size_t dim,
                                  size_t beam_width,
                                  char **out_labels);

// Annotates one utterance from a loaded feature matrix.
//
// Behaves like [`mrn_model_annotate`] with the matrix's own shape.
//
// # Safety
// `model` and `features` must be live handles and `out_labels` a valid
// pointer to writable memory.
enum MrnStatus mrn_model_annotate_features(const struct MrnModel *model,
                                           const struct MrnFeatures *features,
                                           size_t beam_width,
                                           char **out_labels);

// Loads a binary feature file (as written by `moranno gen --features`)
// into `*out_features`. Release the handle with [`mrn_features_free`].
//
// # Safety
// `path` must be a valid NUL-terminated C string and `out_features` a
// valid pointer to writable memory.
enum MrnStatus mrn_features_load(const char *path, struct MrnFeatures **out_features);

// Writes the number of frames in a feature matrix to `*out_frames`.
//
// # Safety
// `features` must be a live handle and `out_frames` a valid pointer.
enum MrnStatus mrn_features_frame_count(const struct MrnFeatures *features, size_t *out_frames);

// Writes the per-frame channel count of a feature matrix to `*out_dim`.
//
// # Safety
// `features` must be a live handle and `out_dim` a valid pointer.
enum MrnStatus mrn_features_dim(const struct MrnFeatures *features, size_t *out_dim);

// Releases a feature matrix. Passing null is a no-op.
//
// # Safety
// `features` must be null or a pointer returned by
// [`mrn_features_load`] that has not been freed yet.
void mrn_features_free(struct MrnFeatures *features);

// Releases a string returned through a `char **` out-parameter.
// Passing null is a no-op.
//
// # Safety
// `s` must be null or a string returned by this library that has not
// been freed yet.
void mrn_string_free(char *s);

// Checks that `labels` parses as an alternating mora/prosody label
// string over the default inventory. Returns `MRN_STATUS_OK` when it
// does; `MRN_STATUS_PARSE_ERROR` (with a message) when it does not.
//
// # Safety
// `labels` must be a valid NUL-terminated C string.
enum MrnStatus mrn_labels_validate(const char *labels);

// Computes the phoneme error rate of `hypothesis` against `reference`:
// mora-level edit distance divided by reference length, prosody ignored.
// Both arguments are label strings. Writes the rate to `*out_rate`.
//
// # Safety
// `reference` and `hypothesis` must be valid NUL-terminated C strings
// and `out_rate` a valid pointer.
enum MrnStatus mrn_phoneme_error_rate(const char *reference,
                                      const char *hypothesis,
                                      double *out_rate);

// Scores the prosody stream of `hypothesis` against `reference`.
//
// Both arguments are label strings whose mora streams must have equal
// length (score prosody only where the phonemes already match).
// `excluded` lists prosody symbols to skip, comma-separated (e.g.
// `"_,?"`); pass `NULL` for that default, or `""` to score everything.
// Reference positions carrying an excluded symbol contribute nothing to
// any count. With no scorable events at all, precision, recall, and F1
// are all defined as 1. Each output pointer may be `NULL` if that score
// is not wanted.
//
// # Safety
// `reference` and `hypothesis` must be valid NUL-terminated C strings;
// `excluded` must be null or a valid NUL-terminated C string; non-null
// out-pointers must be writable.
enum MrnStatus mrn_prosody_scores(const char *reference,
                                  const char *hypothesis,
                                  const char *excluded,
                                  double *out_precision,
                                  double *out_recall,
                                  double *out_f1);

// Computes the edit distance between two whitespace-tokenized strings,
// with no grammar applied. Writes the distance to `*out_distance`.
//
// # Safety
// `a` and `b` must be valid NUL-terminated C strings and `out_distance`
// a valid pointer.
enum MrnStatus mrn_token_edit_distance(const char *a, const char *b, size_t *out_distance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MORANNO_H */
