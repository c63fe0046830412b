#ifndef SKIDSAFE_H
#define SKIDSAFE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SkStatus {
  SK_STATUS_OK = 0,
  SK_STATUS_NULL_POINTER = 1,
  SK_STATUS_INVALID_ARGUMENT = 2,
  SK_STATUS_IO = 3,
  SK_STATUS_FORMAT = 4,
  SK_STATUS_CONFIG = 5,
  SK_STATUS_CONTRACT = 6,
  SK_STATUS_NUMERIC = 7,
  SK_STATUS_TRAINING_DIVERGED = 8,
  SK_STATUS_PANIC = 9,
} SkStatus;

typedef enum SkDisturbanceKind {
  SK_DISTURBANCE_KIND_NONE = 0,
  SK_DISTURBANCE_KIND_CONTROL_SCALE = 1,
  SK_DISTURBANCE_KIND_ADDITIVE_STEP = 2,
  SK_DISTURBANCE_KIND_SINUSOID = 3,
} SkDisturbanceKind;

typedef enum SkMode {
  SK_MODE_DNN = 0,
  SK_MODE_RAC = 1,
  SK_MODE_HYBRID = 2,
} SkMode;

typedef enum SkPolicy {
  SK_POLICY_DNN = 0,
  SK_POLICY_RAC = 1,
  SK_POLICY_HALTED = 2,
} SkPolicy;

// One side's supervised controller.
typedef struct SkController SkController;

// Trained inverse model.
typedef struct SkModel SkModel;

// One side's plant with its disturbance.
typedef struct SkPlant SkPlant;

// `frequency_hz` is read only for sinusoids.
typedef struct SkDisturbance {
  enum SkDisturbanceKind kind;
  double t_start_s;
  double magnitude;
  double frequency_hz;
} SkDisturbance;

// Envelope `(shoot - bound) * exp(-rate * t) + bound`, in m/s.
typedef struct SkEnvelope {
  double shoot_mps;
  double bound_mps;
  double rate_per_s;
} SkEnvelope;

typedef struct SkRacGains {
  double k;
  double gamma;
  double delta_per_s;
  double theta_hat0;
} SkRacGains;

// One supervisor decision. `command_rpm` is NaN once halted.
typedef struct SkDecision {
  double command_rpm;
  enum SkPolicy policy;
  double theta_hat;
} SkDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sk_version(void);

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *sk_last_error(void);

// Loads a model file written by `skidsafe train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SkStatus sk_model_load(const char *path, struct SkModel **out_model);

// # Safety
// `m` must come from `sk_model_load` and not be used afterwards. NULL is ignored.
void sk_model_free(struct SkModel *m);

// Feed-forward command in rpm for wheel speed `v_mps`.
//
// # Safety
// `m` must be a live model handle; `out_rpm` must be writable.
enum SkStatus sk_model_command(const struct SkModel *m, double v_mps, double *out_rpm);

// Creates a plant at rest. `dist` may be NULL for no disturbance.
//
// # Safety
// `dist` must be NULL or readable; `out_plant` must be writable.
enum SkStatus sk_plant_new(double k_v_mps_per_rpm,
                           double tau_s,
                           double n_max_rpm,
                           const struct SkDisturbance *dist,
                           struct SkPlant **out_plant);

// # Safety
// `p` must come from `sk_plant_new` and not be used afterwards. NULL is ignored.
void sk_plant_free(struct SkPlant *p);

// Advances the plant by `dt_s` under command `n_rpm`; writes the new speed.
//
// # Safety
// `p` must be a live plant handle; `out_v_mps` must be NULL or writable.
enum SkStatus sk_plant_step(struct SkPlant *p, double n_rpm, double dt_s, double *out_v_mps);

// Current speed and time of the plant.
//
// # Safety
// `p` must be a live plant handle; the outputs must be writable.
enum SkStatus sk_plant_state(const struct SkPlant *p, double *out_v_mps, double *out_t_s);

// Creates a supervised controller for one side.
//
// # Safety
// The envelope and gain pointers must be readable; `out_ctrl` writable.
enum SkStatus sk_controller_new(enum SkMode mode,
                                const struct SkEnvelope *zeta,
                                const struct SkEnvelope *o,
                                const struct SkRacGains *gains,
                                struct SkController **out_ctrl);

// # Safety
// `c` must come from `sk_controller_new` and not be used afterwards. NULL is ignored.
void sk_controller_free(struct SkController *c);

// One supervised control step for tracking error `e_mps = v - v_ref` at
// time `t_s`. Pass NaN for `u_dnn_rpm` in rac mode. A shutdown is
// reported through `out->policy`, not through the status.
//
// # Safety
// `c` must be a live controller handle; `out_decision` must be writable.
enum SkStatus sk_controller_step(struct SkController *c,
                                 double e_mps,
                                 double t_s,
                                 double u_dnn_rpm,
                                 double dt_s,
                                 struct SkDecision *out_decision);

// Runs a scenario from a TOML experiment file and writes the trace CSV
// and, if `summary_path` is non-NULL, the JSON summary. `out_exit_code`
// receives 0 for a completed run and 2 for a safety shutdown. Model
// paths may be NULL in rac mode.
//
// # Safety
// String arguments must be NULL or NUL-terminated; `out_exit_code` writable.
enum SkStatus sk_simulate(const char *config_path,
                          const char *left_model_path,
                          const char *right_model_path,
                          const char *trace_path,
                          const char *summary_path,
                          int32_t *out_exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKIDSAFE_H */
