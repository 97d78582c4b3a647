#ifndef PVP_H
#define PVP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  PVP_STATUS_OK = 0,
  PVP_STATUS_NULL_POINTER = 1,
  PVP_STATUS_INVALID_ARGUMENT = 2,
  PVP_STATUS_CONFIG = 3,
  PVP_STATUS_NUMERIC = 4,
  PVP_STATUS_IO = 5,
  PVP_STATUS_RUNTIME = 6,
  PVP_STATUS_PANIC = 7,
} PvpStatus;

/**
 * Opaque environment handle.
 */
typedef struct PvpEnv PvpEnv;

/**
 * Outcome of one environment step.
 */
typedef struct {
  double reward;
  uint8_t cost;
  bool done;
  bool success;
  bool violation;
  bool truncated;
} PvpStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pvp_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void pvp_string_free(char *s);

/**
 * Builds an environment from a JSON config such as
 * `{"env":"gridworld","width":6,"height":6,"layout":"empty"}`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
PvpStatus pvp_env_new(const char *config_json, PvpEnv **out);

/**
 * # Safety
 * `env` must come from [`pvp_env_new`] and not be used afterwards. Null is ignored.
 */
void pvp_env_free(PvpEnv *env);

/**
 * Observation length, and the action layout: `discrete` is set for index
 * actions, in which case `action_dim` is the number of actions.
 *
 * # Safety
 * All pointers must be valid.
 */
PvpStatus pvp_env_spec(PvpEnv *env, size_t *obs_dim, bool *discrete, size_t *action_dim);

/**
 * Starts an episode and writes the first observation.
 *
 * # Safety
 * `obs_out` must hold `obs_len` doubles.
 */
PvpStatus pvp_env_reset(PvpEnv *env, uint64_t seed, double *obs_out, size_t obs_len);

/**
 * # Safety
 * `obs_out` must hold `obs_len` doubles and `step_out` must be writable.
 */
PvpStatus pvp_env_step_discrete(PvpEnv *env,
                                size_t action,
                                double *obs_out,
                                size_t obs_len,
                                PvpStep *step_out);

/**
 * # Safety
 * `action` must hold `action_len` doubles, `obs_out` `obs_len` doubles.
 */
PvpStatus pvp_env_step_continuous(PvpEnv *env,
                                  const double *action,
                                  size_t action_len,
                                  double *obs_out,
                                  size_t obs_len,
                                  PvpStep *step_out);

/**
 * Writes the scripted expert's action: one value (the index) for discrete
 * environments, `action_dim` values otherwise.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
PvpStatus pvp_env_expert_action(PvpEnv *env, double *out, size_t len);

/**
 * Proxy value loss `mean[(q_h - b)^2 + (q_n + b)^2]` over `n` pairs.
 *
 * # Safety
 * `q_h` and `q_n` must hold `n` doubles; `out` must be writable.
 */
PvpStatus pvp_pv_loss(const double *q_h, const double *q_n, size_t n, double bound, double *out);

/**
 * Intent-violation bound `(kappa + epsilon * psi) / (1 - gamma)`.
 *
 * # Safety
 * `out` must be writable.
 */
PvpStatus pvp_compute_bound(double gamma, double epsilon, double kappa, double psi, double *out);

/**
 * Runs training from a JSON run config and returns the run summary as a
 * JSON string, to be released with [`pvp_string_free`].
 *
 * # Safety
 * `config_json` must be NUL-terminated; `summary_out` must be writable.
 */
PvpStatus pvp_train(const char *config_json, char **summary_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVP_H */
