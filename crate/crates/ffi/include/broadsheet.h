#ifndef BROADSHEET_H
#define BROADSHEET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BroadsheetStatus {
  BROADSHEET_STATUS_OK = 0,
  BROADSHEET_STATUS_NULL_POINTER = 1,
  BROADSHEET_STATUS_INVALID_UTF8 = 2,
  BROADSHEET_STATUS_INVALID_ARGUMENT = 3,
  BROADSHEET_STATUS_IO = 4,
  BROADSHEET_STATUS_FORMAT = 5,
  BROADSHEET_STATUS_PANIC = 6,
} BroadsheetStatus;

typedef enum BroadsheetIndexKind {
  BROADSHEET_INDEX_KIND_WORD = 0,
  BROADSHEET_INDEX_KIND_CHARACTER = 1,
} BroadsheetIndexKind;

// Exemplar index handle.
typedef struct BroadsheetIndex BroadsheetIndex;

// Spell corrector handle.
typedef struct BroadsheetSpeller BroadsheetSpeller;

// Axis-aligned box in page pixels.
typedef struct BroadsheetBox {
  double x0;
  double y0;
  double x1;
  double y1;
} BroadsheetBox;

typedef struct BroadsheetBatchSummary {
  size_t scans_total;
  size_t scans_processed;
  size_t scans_failed;
  size_t articles;
  size_t lines;
} BroadsheetBatchSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library on the same thread.
const char *broadsheet_last_error(void);

// Library version as a static string.
const char *broadsheet_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void broadsheet_string_free(char *s);

// Character-level edit distance between two UTF-8 strings.
//
// # Safety
// `a` and `b` must be NUL-terminated strings; `out` must be writable.
enum BroadsheetStatus broadsheet_levenshtein(const char *a, const char *b, size_t *out);

// Corpus character error rate over `n` prediction/truth pairs.
//
// # Safety
// `predicted` and `truth` must point to `n` NUL-terminated strings each.
enum BroadsheetStatus broadsheet_cer(const char *const *predicted,
                                     const char *const *truth,
                                     size_t n,
                                     double *out);

// Intersection over union of two boxes.
//
// # Safety
// All pointers must be valid.
enum BroadsheetStatus broadsheet_iou(const struct BroadsheetBox *a,
                                     const struct BroadsheetBox *b,
                                     double *out);

// Greedy non-maximum suppression. Survivors are written to `kept` (room
// for `n` boxes) in descending score order; their count to `kept_len`.
//
// # Safety
// `boxes` and `scores` must hold `n` elements, `kept` room for `n`.
enum BroadsheetStatus broadsheet_nms(const struct BroadsheetBox *boxes,
                                     const double *scores,
                                     size_t n,
                                     double iou_threshold,
                                     struct BroadsheetBox *kept,
                                     size_t *kept_len);

// Loads an exemplar index file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum BroadsheetStatus broadsheet_index_load(const char *path, struct BroadsheetIndex **out);

// Builds an index from `n` labels and a row-major `n * dim` matrix of
// unit-norm vectors.
//
// # Safety
// `labels` must hold `n` strings and `vectors` `n * dim` floats.
enum BroadsheetStatus broadsheet_index_build(const char *const *labels,
                                             const float *vectors,
                                             size_t n,
                                             size_t dim,
                                             enum BroadsheetIndexKind kind,
                                             struct BroadsheetIndex **out);

// # Safety
// `index` must come from this library and not have been freed.
void broadsheet_index_free(struct BroadsheetIndex *index);

// # Safety
// `index` must be a valid handle.
size_t broadsheet_index_len(const struct BroadsheetIndex *index);

// # Safety
// `index` must be a valid handle.
size_t broadsheet_index_dim(const struct BroadsheetIndex *index);

// Label of `row`, or NULL when out of range. Owned by the handle.
//
// # Safety
// `index` must be a valid handle.
const char *broadsheet_index_label(const struct BroadsheetIndex *index, size_t row);

// Nearest exemplar by cosine similarity; ties go to the lowest row.
//
// # Safety
// `query` must hold `dim` floats; `row` and `similarity` must be writable.
enum BroadsheetStatus broadsheet_index_nearest(const struct BroadsheetIndex *index,
                                               const float *query,
                                               size_t dim,
                                               size_t *row,
                                               float *similarity);

// Loads a word list (`term[<TAB>frequency]` per line) into a spell corrector.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum BroadsheetStatus broadsheet_speller_load(const char *path,
                                              size_t max_edit,
                                              struct BroadsheetSpeller **out);

// # Safety
// `speller` must come from this library and not have been freed.
void broadsheet_speller_free(struct BroadsheetSpeller *speller);

// Corrects every token of `text`, keeping whitespace and punctuation.
// The result must be released with [`broadsheet_string_free`].
//
// # Safety
// `speller` must be valid, `text` NUL-terminated and `out` writable.
enum BroadsheetStatus broadsheet_speller_correct(const struct BroadsheetSpeller *speller,
                                                 const char *text,
                                                 char **out);

// Supervised contrastive loss of `n` unit-norm rows of width `dim`;
// rows sharing a label are positives of each other.
//
// # Safety
// `rows` must hold `n * dim` doubles and `labels` `n` integers.
enum BroadsheetStatus broadsheet_supcon_loss(const double *rows,
                                             const int64_t *labels,
                                             size_t n,
                                             size_t dim,
                                             double temperature,
                                             double *out);

// Runs the pipeline over a manifest and writes outputs to `out_dir`.
// `workers` of zero keeps the configured worker count. Per-scan failures
// are recorded in the output error ledger and counted in the summary; the
// call itself fails only when the run cannot start or outputs cannot be
// written.
//
// # Safety
// String arguments must be NUL-terminated; `summary` may be NULL.
enum BroadsheetStatus broadsheet_run_batch(const char *manifest,
                                           const char *config,
                                           const char *out_dir,
                                           size_t workers,
                                           struct BroadsheetBatchSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BROADSHEET_H */
