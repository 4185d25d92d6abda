#ifndef EMASTATE_H
#define EMASTATE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum EmaStatus {
  EMA_STATUS_OK = 0,
  EMA_STATUS_VALIDATION = 2,
  EMA_STATUS_NUMERICAL = 3,
  EMA_STATUS_IO = 4,
  EMA_STATUS_NULL_POINTER = 5,
  EMA_STATUS_INVALID_UTF8 = 6,
  EMA_STATUS_PANIC = 7,
} EmaStatus;

// A dataset of one or more participants.
typedef struct EmaData EmaData;

// Filtered moments for one participant.
typedef struct EmaFilter EmaFilter;

// A model specification.
typedef struct EmaModel EmaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Code of the last error on this thread (e.g. `"NO_PRINCIPAL_LOG"`), or
// null if the last call succeeded. Valid until the next call on this thread.
const char *ema_last_error_code(void);

// Human-readable message for the last error on this thread, or null.
const char *ema_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer previously returned by this library.
void ema_string_free(char *s);

// Parses a model from JSON.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum EmaStatus ema_model_from_json(const char *json, struct EmaModel **out);

// Serializes a model to JSON.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmaStatus ema_model_to_json(const struct EmaModel *model, char **out);

// Validation report as JSON (`{"errors": [...], "warnings": [...]}`);
// returns `Validation` when the report holds errors.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmaStatus ema_model_validate(const struct EmaModel *model, char **out);

// Exact discretization of a continuous-time model over `dt`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmaStatus ema_model_discretize(const struct EmaModel *model, double dt, struct EmaModel **out);

// Continuous-time equivalent of a discrete model sampled every `dt`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum EmaStatus ema_model_to_continuous(const struct EmaModel *model,
                                       double dt,
                                       struct EmaModel **out);

// Copies the row-major `A` matrix into `buf` (`n_states²` doubles).
//
// # Safety
// `model` must be a live handle; `buf` must hold `len` doubles.
enum EmaStatus ema_model_get_a(const struct EmaModel *model, double *buf, size_t len);

// Number of latent states, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t ema_model_n_states(const struct EmaModel *model);

// # Safety
// `model` must be null or a handle not yet freed.
void ema_model_free(struct EmaModel *model);

// Simulates a dataset from a model and a scenario given as JSON.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum EmaStatus ema_simulate(const struct EmaModel *model,
                            const char *scenario_json,
                            uint64_t seed,
                            struct EmaData **out);

// Reads a dataset file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum EmaStatus ema_dataset_read(const char *path, struct EmaData **out);

// Writes a dataset file.
//
// # Safety
// `data` must be a live handle; `path` a nul-terminated string.
enum EmaStatus ema_dataset_write(const struct EmaData *data, const char *path);

// Number of participants, or 0 for a null handle.
//
// # Safety
// `data` must be null or a live handle.
size_t ema_dataset_n_participants(const struct EmaData *data);

// # Safety
// `data` must be null or a handle not yet freed.
void ema_dataset_free(struct EmaData *data);

// Kalman filter (discrete or continuous time, chosen by the model) for one
// participant.
//
// # Safety
// Handles must be live; `out` must be writable.
enum EmaStatus ema_kalman_filter(const struct EmaModel *model,
                                 const struct EmaData *data,
                                 size_t participant,
                                 struct EmaFilter **out);

// Bootstrap particle filter for one participant.
//
// # Safety
// Handles must be live; `out` must be writable.
enum EmaStatus ema_particle_filter(const struct EmaModel *model,
                                   const struct EmaData *data,
                                   size_t participant,
                                   size_t n_particles,
                                   uint64_t seed,
                                   struct EmaFilter **out);

// Total log-likelihood (NaN for a null handle).
//
// # Safety
// `f` must be null or a live handle.
double ema_filter_log_likelihood(const struct EmaFilter *f);

// Number of pings (0 for a null handle).
//
// # Safety
// `f` must be null or a live handle.
size_t ema_filter_len(const struct EmaFilter *f);

// Copies the filtered state mean at ping `t` into `buf`.
//
// # Safety
// `f` must be a live handle; `buf` must hold `len` doubles.
enum EmaStatus ema_filter_mean(const struct EmaFilter *f, size_t t, double *buf, size_t len);

// # Safety
// `f` must be null or a handle not yet freed.
void ema_filter_free(struct EmaFilter *f);

// Kalman-likelihood fit of a template (JSON) to a dataset; writes the fit
// results as a JSON array. `pooled` selects pooled (non-zero) or
// idiographic (zero) mode.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum EmaStatus ema_fit(const char *template_json,
                       const struct EmaData *data,
                       int32_t pooled,
                       size_t n_restarts,
                       uint64_t seed,
                       char **out);

// AIC and BIC for a log-likelihood.
//
// # Safety
// `aic` and `bic` must be writable.
enum EmaStatus ema_information_criteria(double log_likelihood,
                                        size_t k,
                                        size_t n_obs_used,
                                        double *aic,
                                        double *bic);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMASTATE_H */
