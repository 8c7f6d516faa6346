#ifndef HERBPROBE_H
#define HERBPROBE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HpStatus {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_ARGUMENT = 1,
  HP_STATUS_INVALID_UTF8 = 2,
  HP_STATUS_IO = 3,
  /**
   * Malformed corpus, dataset or JSON argument.
   */
  HP_STATUS_INVALID_INPUT = 4,
  /**
   * Corpus too small or ingredient pool exhausted.
   */
  HP_STATUS_DATASET_CONSTRAINT = 5,
  /**
   * Metric requested on an empty confusion matrix.
   */
  HP_STATUS_EMPTY_CONFUSION = 6,
  HP_STATUS_PANIC = 7,
} HpStatus;

typedef enum HpLang {
  HP_LANG_ZH = 0,
  HP_LANG_EN = 1,
} HpLang;

typedef enum HpVerdict {
  HP_VERDICT_YES = 0,
  HP_VERDICT_NO = 1,
  HP_VERDICT_INVALID = 2,
} HpVerdict;

typedef struct HpCorpus HpCorpus;

typedef struct HpDataset HpDataset;

typedef struct HpIndex HpIndex;

/**
 * Percentages in [0, 100], unrounded.
 */
typedef struct HpMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  bool precision_undefined;
  bool recall_undefined;
} HpMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string. Do not free.
 */
const char *hp_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * Valid until the next call into the library from this thread. Do not free.
 */
const char *hp_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string handed out by this library, freed once.
 */
void hp_string_free(char *s);

/**
 * Loads a JSONL corpus file.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum HpStatus hp_corpus_load(const char *path, struct HpCorpus **out);

/**
 * Parses a corpus from JSONL text held in memory.
 *
 * # Safety
 * `jsonl` must be a valid C string; `out` must be writable.
 */
enum HpStatus hp_corpus_from_jsonl(const char *jsonl, struct HpCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a live handle, freed once.
 */
void hp_corpus_free(struct HpCorpus *corpus);

/**
 * Number of records; 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t hp_corpus_len(const struct HpCorpus *corpus);

/**
 * SHA-256 fingerprint of the normalized corpus as hex.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum HpStatus hp_corpus_fingerprint(const struct HpCorpus *corpus, char **out);

/**
 * Builds the mixed T/F dataset for `seed`.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum HpStatus hp_dataset_build(const struct HpCorpus *corpus,
                               uint64_t seed,
                               bool match_markers,
                               struct HpDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a live handle, freed once.
 */
void hp_dataset_free(struct HpDataset *dataset);

/**
 * Number of items; 0 for NULL.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t hp_dataset_len(const struct HpDataset *dataset);

/**
 * The dataset in its JSONL file form, header line included.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum HpStatus hp_dataset_to_jsonl(const struct HpDataset *dataset, char **out);

/**
 * Builds a BM25 index over the corpus. The index does not borrow the corpus.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum HpStatus hp_index_build(const struct HpCorpus *corpus, struct HpIndex **out);

/**
 * # Safety
 * `index` must be NULL or a live handle, freed once.
 */
void hp_index_free(struct HpIndex *index);

/**
 * Top-`k` entries for `query` as a JSON array of
 * `{doc_id, drug_name, score, rendered_text}`.
 *
 * # Safety
 * `index` must be a live handle; `query` a valid C string; `out` writable.
 */
enum HpStatus hp_index_search_json(const struct HpIndex *index,
                                   const char *query,
                                   size_t k,
                                   char **out);

/**
 * Inquiry prompt for a drug name.
 *
 * # Safety
 * `drug_name` must be a valid C string; `out` writable.
 */
enum HpStatus hp_build_inquiry_prompt(const char *drug_name, enum HpLang lang_, char **out);

/**
 * Verification prompt; `ingredients_json` is a JSON array of strings.
 *
 * # Safety
 * Both strings must be valid C strings; `out` writable.
 */
enum HpStatus hp_build_verify_prompt(const char *drug_name,
                                     const char *ingredients_json,
                                     enum HpLang lang_,
                                     char **out);

/**
 * Classifies a raw verification response.
 *
 * # Safety
 * `raw` must be a valid C string; `out` writable.
 */
enum HpStatus hp_parse_yes_no(const char *raw, enum HpVerdict *out);

/**
 * Ingredient names found in a raw inquiry response, as a JSON array.
 *
 * # Safety
 * `raw` must be a valid C string; `out` writable.
 */
enum HpStatus hp_parse_ingredient_list(const char *raw, char **out);

/**
 * Accuracy, precision, recall and F1 from a confusion matrix.
 *
 * # Safety
 * `out` must be writable.
 */
enum HpStatus hp_prf1(uint64_t tp, uint64_t fp, uint64_t fn_, uint64_t tn, struct HpMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HERBPROBE_H */
