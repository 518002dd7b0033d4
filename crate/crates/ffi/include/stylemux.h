#ifndef STYLEMUX_H
#define STYLEMUX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StylemuxStatus {
  STYLEMUX_STATUS_OK = 0,
  /**
   * Bad configuration or argument value (unknown language, style, ...).
   */
  STYLEMUX_STATUS_CONFIG = 1,
  /**
   * Unreadable or malformed input files.
   */
  STYLEMUX_STATUS_DATA = 2,
  /**
   * Non-finite values during computation.
   */
  STYLEMUX_STATUS_NUMERICAL = 3,
  STYLEMUX_STATUS_NULL_POINTER = 4,
  STYLEMUX_STATUS_INVALID_UTF8 = 5,
  STYLEMUX_STATUS_PANIC = 6,
} StylemuxStatus;

/**
 * Opaque handle to a loaded model directory.
 */
typedef struct StylemuxTranslator StylemuxTranslator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from this thread.
 */
const char *stylemux_last_error(void);

/**
 * Library version, a static string.
 */
const char *stylemux_version(void);

/**
 * Opens a model directory produced by `stylemux train`.
 *
 * # Safety
 * `model_dir` must be a valid C string and `out` a valid pointer.
 */
enum StylemuxStatus stylemux_translator_open(const char *model_dir,
                                             struct StylemuxTranslator **out);

/**
 * Translates one sentence into `tgt_lang` and `tgt_style` (registry names).
 * `max_len` 0 picks a length from the source. On success `*out` holds a
 * string to release with `stylemux_string_free`.
 *
 * # Safety
 * `translator` must come from `stylemux_translator_open`; string arguments
 * must be valid C strings and `out` a valid pointer.
 */
enum StylemuxStatus stylemux_translate(const struct StylemuxTranslator *translator,
                                       const char *text,
                                       const char *tgt_lang,
                                       const char *tgt_style,
                                       uint32_t beam,
                                       uint32_t max_len,
                                       char **out);

/**
 * Releases a translator; null is ignored.
 *
 * # Safety
 * `translator` must come from `stylemux_translator_open` and not be used
 * afterwards.
 */
void stylemux_translator_free(struct StylemuxTranslator *translator);

/**
 * Releases a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void stylemux_string_free(char *s);

/**
 * Corpus BLEU-4 of `n` hypothesis lines against `n` reference lines.
 *
 * # Safety
 * `hyps` and `refs` must point to `n` valid C strings each; `out` must be
 * a valid pointer.
 */
enum StylemuxStatus stylemux_bleu(const char *const *hyps,
                                  const char *const *refs,
                                  size_t n,
                                  double *out);

/**
 * Sentence-averaged METEOR-lite without a synonym table.
 *
 * # Safety
 * As for `stylemux_bleu`.
 */
enum StylemuxStatus stylemux_meteor_lite(const char *const *hyps,
                                         const char *const *refs,
                                         size_t n,
                                         double *out);

/**
 * Apostrophe clitics in `text`, which may hold several lines.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum StylemuxStatus stylemux_count_contractions(const char *text, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STYLEMUX_H */
