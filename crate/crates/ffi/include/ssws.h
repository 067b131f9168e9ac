#ifndef SSWS_H
#define SSWS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SswsStatus {
  SSWS_STATUS_OK = 0,
  SSWS_STATUS_NULL_POINTER = 1,
  SSWS_STATUS_INVALID_ARGUMENT = 2,
  SSWS_STATUS_IO = 3,
  SSWS_STATUS_FORMAT = 4,
  SSWS_STATUS_MODEL = 5,
  SSWS_STATUS_STATS = 6,
  SSWS_STATUS_DESIGN = 7,
  SSWS_STATUS_BUFFER_TOO_SMALL = 8,
  SSWS_STATUS_PANIC = 9,
} SswsStatus;

/**
 * A built listener assignment with the plan it came from.
 */
typedef struct SswsAssignment SswsAssignment;

/**
 * A trained model: configuration plus parameters.
 */
typedef struct SswsModel SswsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread ("" after a success).
 * Valid until the next call into this library on the same thread.
 */
const char *ssws_last_error(void);

/**
 * Static version string.
 */
const char *ssws_version(void);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void ssws_string_free(char *s);

/**
 * μ-law encodes one amplitude in [-1, 1] with `bins` levels.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SswsStatus ssws_mulaw_encode(double x, size_t bins, size_t *out);

/**
 * Centre amplitude of `bin`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SswsStatus ssws_mulaw_decode(size_t bin, size_t bins, double *out);

/**
 * Encodes `n` samples into `out` (`n` entries).
 *
 * # Safety
 * `samples` and `out` must hold `n` elements.
 */
enum SswsStatus ssws_mulaw_encode_buffer(const float *samples,
                                         size_t n,
                                         size_t bins,
                                         uint32_t *out);

/**
 * Decodes `n` bins into `out`.
 *
 * # Safety
 * `bins_in` and `out` must hold `n` elements.
 */
enum SswsStatus ssws_mulaw_decode_buffer(const uint32_t *bins_in,
                                         size_t n,
                                         size_t bins,
                                         float *out);

/**
 * Loads a checkpoint and its `key = value` model config.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be a valid pointer.
 */
enum SswsStatus ssws_model_load(const char *checkpoint_path,
                                const char *config_path,
                                struct SswsModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`ssws_model_load`], freed once.
 */
void ssws_model_free(struct SswsModel *model);

/**
 * Receptive field of the model's stack, in samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SswsStatus ssws_model_receptive_field(const struct SswsModel *model, size_t *out);

/**
 * Samples produced for `frames` frames (`frames × hop_size`).
 *
 * # Safety
 * Pointers must be valid.
 */
enum SswsStatus ssws_model_samples_for_frames(const struct SswsModel *model,
                                              size_t frames,
                                              size_t *out);

/**
 * Synthesizes from row-major `frames × 88` features into `out`
 * (capacity `out_len`, at least `frames × hop_size`).
 *
 * # Safety
 * `features` must hold `frames × 88` floats, `out` `out_len` floats.
 */
enum SswsStatus ssws_model_synthesize(const struct SswsModel *model,
                                      const float *features,
                                      size_t frames,
                                      uint64_t seed,
                                      float *out,
                                      size_t out_len,
                                      size_t *written);

/**
 * Two-sided paired t-test of `a − b`.
 *
 * # Safety
 * `a`, `b` hold `n` doubles; `t` and `p` are valid.
 */
enum SswsStatus ssws_paired_t_test(const double *a,
                                   const double *b,
                                   size_t n,
                                   double *t,
                                   double *p);

/**
 * Two-sided Wilcoxon signed-rank test of `a − b` (exact for ≤ 20 non-zero
 * differences).
 *
 * # Safety
 * `a`, `b` hold `n` doubles; `w_plus` and `p` are valid.
 */
enum SswsStatus ssws_wilcoxon(const double *a,
                              const double *b,
                              size_t n,
                              double *w_plus,
                              double *p);

/**
 * Holm step-down: adjusted p-values and rejections (1/0) in input order.
 *
 * # Safety
 * `p`, `adjusted`, `reject` hold `n` elements.
 */
enum SswsStatus ssws_holm(const double *p,
                          size_t n,
                          double alpha,
                          double *adjusted,
                          uint8_t *reject);

/**
 * Per-screen ranks (1 = best, ties averaged).
 *
 * # Safety
 * `scores` and `ranks` hold `n` doubles.
 */
enum SswsStatus ssws_screen_ranks(const double *scores, size_t n, double *ranks);

/**
 * Builds an assignment from plan text (the TSV plan format). If
 * `override_seed` is non-zero, `seed` replaces the plan's seed.
 *
 * # Safety
 * `plan_text` is NUL-terminated; `out` is valid.
 */
enum SswsStatus ssws_assignment_build(const char *plan_text,
                                      uint8_t override_seed,
                                      uint64_t seed,
                                      struct SswsAssignment **out);

/**
 * # Safety
 * `a` must be null or a handle from [`ssws_assignment_build`], freed once.
 */
void ssws_assignment_free(struct SswsAssignment *a);

/**
 * Assignment as JSON; free with [`ssws_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum SswsStatus ssws_assignment_to_json(const struct SswsAssignment *a, char **out);

/**
 * Number of invariant violations against the originating plan (0 = valid).
 *
 * # Safety
 * Pointers must be valid.
 */
enum SswsStatus ssws_assignment_violations(const struct SswsAssignment *a, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSWS_H */
