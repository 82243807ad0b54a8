#ifndef RPCBF_H
#define RPCBF_H

#include <stdint.h>

#if defined(_WIN32)
#define RPCBF_API __declspec(dllexport)
#else
#define RPCBF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every function returning int returns one of these codes. On failure the
 * message is available from rpcbf_last_error() on the same thread. */
enum rpcbf_status {
    RPCBF_OK = 0,
    RPCBF_ERR_INVALID_ARGUMENT = 1,
    RPCBF_ERR_CONFIG = 2,
    RPCBF_ERR_DIVERGED = 3,
    RPCBF_ERR_IO = 4,
    RPCBF_ERR_INTERNAL = 5
};

enum rpcbf_policy_kind { RPCBF_POLICY_SATURATING_LINEAR = 0, RPCBF_POLICY_CONSTANT = 1, RPCBF_POLICY_BANG_BANG = 2 };
enum rpcbf_maximizer { RPCBF_MAX_SPLINE = 0, RPCBF_MAX_DISCRETE = 1 };
enum rpcbf_mode { RPCBF_MODE_NOMINAL_D = 0, RPCBF_MODE_WORST_VERTEX = 1 };
enum rpcbf_filter_status { RPCBF_NOMINAL_PASS = 0, RPCBF_CONSTRAINT_ACTIVE = 1, RPCBF_INFEASIBLE_FALLBACK = 2 };

typedef struct rpcbf_system rpcbf_system;
typedef struct rpcbf_policy rpcbf_policy;
typedef struct rpcbf_experiment rpcbf_experiment;

typedef struct rpcbf_value_config {
    double horizon;       /* T in seconds, a multiple of dt */
    double dt;
    int num_samples;      /* N */
    double vertex_weight;
    uint64_t seed;
    int maximizer;        /* enum rpcbf_maximizer */
    int undisturbed;      /* nonzero: single rollout at the disturbance midpoint */
} rpcbf_value_config;

RPCBF_API const char* rpcbf_version(void);
RPCBF_API const char* rpcbf_last_error(void);

RPCBF_API int rpcbf_system_double_integrator(double mass_lo, double mass_hi, double position_bound,
                                             double control_bound, rpcbf_system** out);
/* Default segway parameters with the body mass box [mass_lo, mass_hi]. */
RPCBF_API int rpcbf_system_segway(double mass_lo, double mass_hi, rpcbf_system** out);
RPCBF_API void rpcbf_system_free(rpcbf_system* system);
RPCBF_API int rpcbf_system_dims(const rpcbf_system* system, int* state_dim, int* control_dim,
                                int* disturbance_dim);
RPCBF_API int rpcbf_system_constraint(const rpcbf_system* system, const double* x, double* h);

/* gains is control_dim x state_dim, row-major; constant has control_dim
 * entries. Either may be NULL when the kind does not use it. */
RPCBF_API int rpcbf_policy_create(const rpcbf_system* system, int kind, const double* gains, const double* constant,
                                  rpcbf_policy** out);
RPCBF_API void rpcbf_policy_free(rpcbf_policy* policy);
RPCBF_API int rpcbf_policy_act(const rpcbf_policy* policy, const double* x, double* u);

RPCBF_API void rpcbf_value_config_default(rpcbf_value_config* config);

/* gradient has state_dim entries. argmax_sample and argmax_time may be NULL. */
RPCBF_API int rpcbf_evaluate(const rpcbf_system* system, const rpcbf_policy* rollout_policy,
                             const rpcbf_value_config* config, const double* x0, double* value, double* gradient,
                             int* argmax_sample, double* argmax_time);

/* One control period of the CBF-QP filter with a linear alpha. u has
 * control_dim entries; status and value may be NULL. */
RPCBF_API int rpcbf_filter_step(const rpcbf_system* system, const rpcbf_policy* rollout_policy,
                                const rpcbf_policy* nominal_policy, const rpcbf_value_config* config, double alpha,
                                int mode, const double* x, double dt_control, double* u, int* status, double* value);

RPCBF_API int rpcbf_experiment_load(const char* path, rpcbf_experiment** out);
RPCBF_API int rpcbf_experiment_parse(const char* json_text, rpcbf_experiment** out);
RPCBF_API void rpcbf_experiment_free(rpcbf_experiment* experiment);
RPCBF_API int rpcbf_experiment_set_seed(rpcbf_experiment* experiment, uint64_t seed);
RPCBF_API int rpcbf_experiment_state_dim(const rpcbf_experiment* experiment, int* state_dim);

/* command is one of "value", "sweep-boundary", "sweep-safe-region",
 * "grad-study", "simulate". state is only read by "value". cell_errors may
 * be NULL; it receives the number of grid cells that failed. */
RPCBF_API int rpcbf_experiment_run(const rpcbf_experiment* experiment, const char* command, const char* out_dir,
                                   const double* state, int state_len, int* cell_errors);

#ifdef __cplusplus
}
#endif

#endif
