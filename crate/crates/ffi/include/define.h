#ifndef DEFINE_H
#define DEFINE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DefineStatus {
  DEFINE_STATUS_OK = 0,
  DEFINE_STATUS_NULL_POINTER = 1,
  DEFINE_STATUS_INVALID_ARGUMENT = 2,
  DEFINE_STATUS_SCHEMA_MISMATCH = 3,
  DEFINE_STATUS_NOT_CONVERGED = 4,
  DEFINE_STATUS_DEGENERATE = 5,
  DEFINE_STATUS_IO = 6,
  DEFINE_STATUS_PANIC = 7,
} DefineStatus;

// Fitted salience strengths.
typedef struct DefineModel DefineModel;

// One transcript's factor profile.
typedef struct DefineProfile DefineProfile;

// Factor taxonomy.
typedef struct DefineSchema DefineSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *define_last_error(void);

// The built-in 15-factor, 33-item schema.
struct DefineSchema *define_schema_default(void);

// Loads a schema JSON file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum DefineStatus define_schema_load(const char *path, struct DefineSchema **out);

// # Safety
// `schema` must be null or a live handle.
size_t define_schema_item_count(const struct DefineSchema *schema);

// # Safety
// `schema` must be null or a live handle.
size_t define_schema_factor_count(const struct DefineSchema *schema);

// Outcomes of `factor`, or 0 when out of range.
//
// # Safety
// `schema` must be null or a live handle.
size_t define_schema_outcome_count(const struct DefineSchema *schema, size_t factor);

// # Safety
// `schema` must be null or a handle not yet freed.
void define_schema_free(struct DefineSchema *schema);

// Builds a profile from grades 1..=6, one per item in flat schema order.
//
// # Safety
// `grades` must point to `len` bytes; `out` must be writable.
enum DefineStatus define_profile_from_grades(const struct DefineSchema *schema,
                                             const uint8_t *grades,
                                             size_t len,
                                             struct DefineProfile **out);

// Builds a profile from probabilities in flat schema order; each factor's
// block must sum to 1.
//
// # Safety
// `probs` must point to `len` doubles; `out` must be writable.
enum DefineStatus define_profile_from_probabilities(const struct DefineSchema *schema,
                                                    const double *probs,
                                                    size_t len,
                                                    struct DefineProfile **out);

// Copies the flat probability vector into `out`, which must hold exactly
// the schema's item count.
//
// # Safety
// `out` must point to `len` writable doubles.
enum DefineStatus define_profile_flatten(const struct DefineProfile *profile,
                                         double *out,
                                         size_t len);

// # Safety
// `profile` must be null or a handle not yet freed.
void define_profile_free(struct DefineProfile *profile);

// KL(p || q) in nats, summed over factors.
//
// # Safety
// Both handles must be live; `out` must be writable.
enum DefineStatus define_kl_divergence(const struct DefineProfile *p,
                                       const struct DefineProfile *q,
                                       double *out);

// Fits strengths to an `m`×`m` row-major comparison matrix, where entry
// (x, y) is the weight of x beating y. `tol <= 0` and `max_iter == 0`
// select the defaults.
//
// # Safety
// `weights` must point to `m * m` doubles; `out` must be writable.
enum DefineStatus define_model_fit(const double *weights,
                                   size_t m,
                                   double tol,
                                   size_t max_iter,
                                   struct DefineModel **out);

// Loads a model file written by `define fit`.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum DefineStatus define_model_load(const char *path, struct DefineModel **out);

// # Safety
// `model` must be null or a live handle.
size_t define_model_len(const struct DefineModel *model);

// Copies the strengths into `out`, which must hold exactly
// `define_model_len` values.
//
// # Safety
// `out` must point to `len` writable doubles.
enum DefineStatus define_model_strengths(const struct DefineModel *model, double *out, size_t len);

// # Safety
// `model` must be null or a handle not yet freed.
void define_model_free(struct DefineModel *model);

// Decision score Σ p_x · P(x | profile).
//
// # Safety
// Both handles must be live; `out` must be writable.
enum DefineStatus define_score(const struct DefineProfile *profile,
                               const struct DefineModel *model,
                               double *out);

// Label index for a percentage return: 0 strong-buy, 1 buy, 2 hold,
// 3 sell, 4 strong-sell; -1 for NaN.
int32_t define_label_for_return(double return_pct);

// Static kebab-case name for a label index, or null when out of range.
const char *define_label_name(int32_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEFINE_H */
