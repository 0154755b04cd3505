#ifndef BAPSRL_H
#define BAPSRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BAP_STATE_DIM 38

#define BAP_ACTION_DIM 2

#define BAP_NUM_CONSTRAINTS 6

typedef enum BapStatus {
  BAP_STATUS_OK = 0,
  BAP_STATUS_NULL_POINTER = 1,
  BAP_STATUS_INVALID_ARGUMENT = 2,
  BAP_STATUS_CONFIG = 3,
  BAP_STATUS_IO = 4,
  BAP_STATUS_CHECKPOINT = 5,
  BAP_STATUS_NUMERIC = 6,
  /**
   * The call was valid but the object is in the wrong state, e.g. stepping
   * a finished episode.
   */
  BAP_STATUS_USAGE = 7,
  BAP_STATUS_PANIC = 99,
} BapStatus;

typedef enum BapTerminal {
  BAP_TERMINAL_NONE = 0,
  BAP_TERMINAL_GOAL = 1,
  BAP_TERMINAL_COLLISION = 2,
  BAP_TERMINAL_TIMEOUT = 3,
} BapTerminal;

/**
 * Opaque configuration.
 */
typedef struct BapConfig BapConfig;

/**
 * Opaque simulator instance.
 */
typedef struct BapEnv BapEnv;

/**
 * Opaque trained policy loaded from a checkpoint.
 */
typedef struct BapPolicy BapPolicy;

/**
 * Result of one simulator tick.
 */
typedef struct BapStepResult {
  double reward;
  /**
   * Sparse (VRU, side, rear) then dense (VRU, side, rear).
   */
  double costs[BAP_NUM_CONSTRAINTS];
  enum BapTerminal terminal;
  /**
   * 0 VRU, 1 side vehicle, 2 rear vehicle; -1 unless `terminal` is a collision.
   */
  int32_t collision_class;
} BapStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Byte length of the calling thread's last error message, 0 if none.
 */
size_t bap_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len - 1` bytes). Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t bap_last_error_message(char *buf, size_t len);

/**
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum BapStatus bap_config_default(struct BapConfig **out);

/**
 * Parses a TOML document; missing keys take their defaults.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BapStatus bap_config_from_toml(const char *text, struct BapConfig **out);

/**
 * Applies one `section.key=value` (or bare `key=value`) override.
 *
 * # Safety
 * `config` must be a live handle; `assignment` a NUL-terminated string.
 */
enum BapStatus bap_config_set(struct BapConfig *config, const char *assignment);

/**
 * Serializes the configuration. Writes at most `len` bytes including the
 * terminating NUL and stores the full length (without NUL) in `needed`.
 *
 * # Safety
 * `config` must be a live handle; `buf` valid for `len` bytes or null;
 * `needed` valid or null.
 */
enum BapStatus bap_config_to_toml(const struct BapConfig *config,
                                  char *buf,
                                  size_t len,
                                  size_t *needed);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void bap_config_free(struct BapConfig *config);

/**
 * Creates a simulator whose randomness derives only from `seed`.
 *
 * # Safety
 * `config` must be a live handle; `out` a valid pointer.
 */
enum BapStatus bap_env_new(const struct BapConfig *config, uint64_t seed, struct BapEnv **out);

/**
 * Starts an episode. `maneuver` is 0 left, 1 right, 2 straight, or -1 to
 * sample it. Writes the first observation into `state`.
 *
 * # Safety
 * `env` must be a live handle; `state` valid for `BAP_STATE_DIM` doubles.
 */
enum BapStatus bap_env_reset(struct BapEnv *env, int32_t maneuver, double *state);

/**
 * Advances one tick with the normalized control `(a_lon, steer)`; values
 * outside `[-1, 1]` are clipped.
 *
 * # Safety
 * `env` must be a live handle; `state` valid for `BAP_STATE_DIM` doubles;
 * `result` valid.
 */
enum BapStatus bap_env_step(struct BapEnv *env,
                            double a_lon,
                            double steer,
                            double *state,
                            struct BapStepResult *result);

/**
 * Ticks elapsed in the current episode.
 *
 * # Safety
 * `env` must be a live handle or null (returns 0).
 */
uint64_t bap_env_tick(const struct BapEnv *env);

/**
 * # Safety
 * `env` must come from this library and not be used afterwards.
 */
void bap_env_free(struct BapEnv *env);

/**
 * Loads a trained policy from a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum BapStatus bap_policy_load(const char *path, struct BapPolicy **out);

/**
 * Deterministic action: the clipped policy mean for `state`.
 *
 * # Safety
 * `policy` must be a live handle; `state` valid for `BAP_STATE_DIM`
 * doubles; `action` valid for `BAP_ACTION_DIM` doubles.
 */
enum BapStatus bap_policy_act(const struct BapPolicy *policy, const double *state, double *action);

/**
 * Reward value and the `BAP_NUM_CONSTRAINTS` cost values for `state`.
 *
 * # Safety
 * `policy` must be a live handle; `state` valid for `BAP_STATE_DIM`
 * doubles; `value_reward` valid; `value_costs` valid for
 * `BAP_NUM_CONSTRAINTS` doubles.
 */
enum BapStatus bap_policy_values(const struct BapPolicy *policy,
                                 const double *state,
                                 double *value_reward,
                                 double *value_costs);

/**
 * Multipliers stored with the policy.
 *
 * # Safety
 * `policy` must be a live handle; `lambda` valid for `BAP_NUM_CONSTRAINTS`
 * doubles.
 */
enum BapStatus bap_policy_lambda(const struct BapPolicy *policy, double *lambda);

/**
 * # Safety
 * `policy` must come from this library and not be used afterwards.
 */
void bap_policy_free(struct BapPolicy *policy);

/**
 * Prior log-odds per constraint, `alpha·ln(lambda + epsilon) + rho`, or
 * zeros when `use_prior` is false.
 *
 * # Safety
 * `lambda`, `rho` and `out` must each be valid for `BAP_NUM_CONSTRAINTS`
 * doubles.
 */
enum BapStatus bap_prior_log_odds(const double *lambda,
                                  const double *rho,
                                  double alpha,
                                  double epsilon,
                                  bool use_prior,
                                  double *out);

/**
 * `eta·max(0, cost - limit) + cost_advantage`.
 */
double bap_violation_evidence(double cost, double limit, double cost_advantage, double eta);

/**
 * Gate `sigmoid(beta·delta + phi_prior)`.
 */
double bap_posterior_weight(double phi_prior, double delta, double beta);

/**
 * Gated Lagrangian advantage for one step.
 *
 * # Safety
 * `cost_advantages`, `weights` and `lambda` must each be valid for
 * `BAP_NUM_CONSTRAINTS` doubles; `out` valid.
 */
enum BapStatus bap_gated_advantage(double reward_advantage,
                                   const double *cost_advantages,
                                   const double *weights,
                                   const double *lambda,
                                   double *out);

/**
 * Projected multiplier step; `lambda` is updated in place.
 *
 * # Safety
 * `lambda`, `episodic_costs` and `limits` must each be valid for
 * `BAP_NUM_CONSTRAINTS` doubles.
 */
enum BapStatus bap_dual_ascent(double *lambda,
                               const double *episodic_costs,
                               const double *limits,
                               double alpha_lambda);

/**
 * Collision probability from a time to collision; pass `INFINITY` when no
 * collision is predicted. A negative or NaN `ttc` is an invalid argument.
 *
 * # Safety
 * `out` must be valid.
 */
enum BapStatus bap_collision_probability(double ttc, double tau_ttc, double *out);

/**
 * Collision harm from masses (kg), speeds (m/s) and the angle between the
 * velocity vectors (rad).
 */
double bap_harm(double mass_ego,
                double mass_other,
                double speed_ego,
                double speed_other,
                double angle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAPSRL_H */
