#ifndef RTK_H
#define RTK_H

#include <stddef.h>
#include <stdint.h>

typedef enum RtkScorerKind {
  RTK_SCORER_KIND_BM25 = 0,
  RTK_SCORER_KIND_BM25T = 1,
  RTK_SCORER_KIND_QL = 2,
  RTK_SCORER_KIND_QLT = 3,
} RtkScorerKind;

// Result of every fallible call.
typedef enum RtkStatus {
  RTK_STATUS_OK = 0,
  RTK_STATUS_NULL_POINTER = 1,
  RTK_STATUS_INVALID_UTF8 = 2,
  RTK_STATUS_IO = 3,
  RTK_STATUS_FORMAT = 4,
  RTK_STATUS_INVALID_ARGUMENT = 5,
  RTK_STATUS_NOT_FOUND = 6,
  RTK_STATUS_BUFFER_TOO_SMALL = 7,
  RTK_STATUS_PANIC = 8,
} RtkStatus;

// Opaque inverted index.
typedef struct RtkIndex RtkIndex;

// Opaque thesaurus.
typedef struct RtkThesaurus RtkThesaurus;

// Scorer parameters. Obtain defaults from [`rtk_params_default`].
typedef struct RtkParams {
  double k1;
  double b;
  double mu;
  // Non-zero normalizes translation rows for QLT.
  int qlt_normalize;
} RtkParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next `rtk_` call on the same thread.
const char *rtk_last_error(void);

struct RtkParams rtk_params_default(void);

// Loads an index written by `rtk index build`.
//
// # Safety
// `path` must be a valid C string and `out` a writable pointer.
enum RtkStatus rtk_index_load(const char *path, struct RtkIndex **out);

// Builds an in-memory index from `n` documents.
//
// # Safety
// `doc_ids` and `texts` must each point to `n` valid C strings.
enum RtkStatus rtk_index_build(const char *const *doc_ids,
                               const char *const *texts,
                               size_t n,
                               int stem,
                               struct RtkIndex **out);

// # Safety
// `index` must come from this library; `path` must be a valid C string.
enum RtkStatus rtk_index_save(const struct RtkIndex *index, const char *path);

// Number of documents, or 0 for a null handle.
//
// # Safety
// `index` must be null or come from this library.
size_t rtk_index_num_docs(const struct RtkIndex *index);

// # Safety
// `index` must be null or come from this library and not be used again.
void rtk_index_free(struct RtkIndex *index);

// Creates an empty thesaurus.
//
// # Safety
// `out` must be a writable pointer.
enum RtkStatus rtk_thesaurus_new(struct RtkThesaurus **out);

// Reads a `qt<TAB>dt<TAB>score` file.
//
// # Safety
// `path` must be a valid C string and `out` a writable pointer.
enum RtkStatus rtk_thesaurus_load(const char *path, struct RtkThesaurus **out);

// Adds an entry; `score` must lie in [0, 1].
//
// # Safety
// `th` must come from this library; `qt` and `dt` must be valid C strings.
enum RtkStatus rtk_thesaurus_insert(struct RtkThesaurus *th,
                                    const char *qt,
                                    const char *dt,
                                    double score);

// # Safety
// `th` must be null or come from this library.
size_t rtk_thesaurus_len(const struct RtkThesaurus *th);

// # Safety
// `th` must be null or come from this library and not be used again.
void rtk_thesaurus_free(struct RtkThesaurus *th);

// Scores raw query text against an indexed document. `thesaurus` may be
// null for BM25 and QL; `params` may be null for defaults.
//
// # Safety
// Handles must come from this library; strings must be valid C strings;
// `out` must be writable.
enum RtkStatus rtk_score(const struct RtkIndex *index,
                         const struct RtkThesaurus *thesaurus,
                         enum RtkScorerKind kind,
                         const struct RtkParams *params,
                         const char *query,
                         const char *doc_id,
                         double *out);

double rtk_margin_mse(double se_pos, double se_neg, double sb_pos, double sb_neg);

double rtk_hinge_loss(double se_pos, double se_neg);

// Parses the first attention record in `bytes` and writes its word-level
// affinity matrix (row-major, query words by document words) to `out`.
// `rows` and `cols` always receive the dimensions when parsing succeeds;
// if `out_len` is smaller than `rows * cols` nothing is copied and
// `BufferTooSmall` is returned, so a first call with `out_len = 0` sizes
// the buffer.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` to `out_len` writable
// doubles (may be null when `out_len` is 0); `rows` and `cols` writable.
enum RtkStatus rtk_aggregate_attention(const uint8_t *bytes,
                                       size_t len,
                                       double *out,
                                       size_t out_len,
                                       size_t *rows,
                                       size_t *cols);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTK_H */
