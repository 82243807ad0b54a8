#include "rpcbf/rpcbf.h"

#include <cstring>
#include <exception>
#include <string>

#include "rpcbf/error.hpp"
#include "rpcbf/experiment.hpp"
#include "rpcbf/filter.hpp"
#include "rpcbf/version.hpp"

struct rpcbf_system {
    rpcbf::SystemPtr impl;
};

struct rpcbf_policy {
    rpcbf::SystemPtr system;
    rpcbf::PolicyPtr impl;
};

struct rpcbf_experiment {
    rpcbf::lab::ExperimentConfig config;
};

namespace {

thread_local std::string last_error;

int fail(int code, const char* message) {
    last_error = message;
    return code;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
int guarded(F&& body) {
    try {
        body();
        last_error.clear();
        return RPCBF_OK;
    } catch (const rpcbf::Error& e) {
        return fail(static_cast<int>(e.code()), e.what());
    } catch (const std::exception& e) {
        return fail(RPCBF_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(RPCBF_ERR_INTERNAL, "unknown error");
    }
}

rpcbf::ValueConfig to_value_config(const rpcbf_value_config* c, const rpcbf_policy* rollout) {
    rpcbf::ValueConfig out;
    out.horizon = c->horizon;
    out.dt = c->dt;
    out.num_samples = c->num_samples;
    out.vertex_weight = c->vertex_weight;
    out.seed = c->seed;
    out.maximizer = c->maximizer == RPCBF_MAX_DISCRETE ? rpcbf::TemporalMax::discrete : rpcbf::TemporalMax::spline;
    out.undisturbed = c->undisturbed != 0;
    out.policy = rollout->impl;
    return out;
}

Eigen::Map<const Eigen::VectorXd> view(const double* p, int n) { return {p, n}; }

}  // namespace

extern "C" {

const char* rpcbf_version(void) { return rpcbf::kVersion; }

const char* rpcbf_last_error(void) { return last_error.c_str(); }

int rpcbf_system_double_integrator(double mass_lo, double mass_hi, double position_bound, double control_bound,
                                   rpcbf_system** out) {
    if (!out) return fail(RPCBF_ERR_INVALID_ARGUMENT, "out is null");
    return guarded([&] {
        rpcbf::DoubleIntegratorParams p;
        p.mass_lo = mass_lo;
        p.mass_hi = mass_hi;
        p.position_bound = position_bound;
        p.control_bound = control_bound;
        *out = new rpcbf_system{rpcbf::make_double_integrator(p)};
    });
}

int rpcbf_system_segway(double mass_lo, double mass_hi, rpcbf_system** out) {
    if (!out) return fail(RPCBF_ERR_INVALID_ARGUMENT, "out is null");
    return guarded([&] {
        rpcbf::SegwayParams p;
        p.body_mass_lo = mass_lo;
        p.body_mass_hi = mass_hi;
        *out = new rpcbf_system{rpcbf::make_segway(p)};
    });
}

void rpcbf_system_free(rpcbf_system* system) { delete system; }

int rpcbf_system_dims(const rpcbf_system* system, int* state_dim, int* control_dim, int* disturbance_dim) {
    if (!system) return fail(RPCBF_ERR_INVALID_ARGUMENT, "system is null");
    if (state_dim) *state_dim = system->impl->state_dim();
    if (control_dim) *control_dim = system->impl->control_dim();
    if (disturbance_dim) *disturbance_dim = system->impl->disturbance_dim();
    return RPCBF_OK;
}

int rpcbf_system_constraint(const rpcbf_system* system, const double* x, double* h) {
    if (!system || !x || !h) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *h = system->impl->constraint(view(x, system->impl->state_dim())); });
}

int rpcbf_policy_create(const rpcbf_system* system, int kind, const double* gains, const double* constant,
                        rpcbf_policy** out) {
    if (!system || !out) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    if (kind < RPCBF_POLICY_SATURATING_LINEAR || kind > RPCBF_POLICY_BANG_BANG)
        return fail(RPCBF_ERR_INVALID_ARGUMENT, "unknown policy kind");
    if (kind == RPCBF_POLICY_CONSTANT ? !constant : !gains)
        return fail(RPCBF_ERR_INVALID_ARGUMENT, "policy kind needs its parameter array");
    return guarded([&] {
        const auto& sys = *system->impl;
        const int n = sys.state_dim(), m = sys.control_dim();
        Eigen::MatrixXd k;
        if (gains) k = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(gains, m, n);
        Eigen::VectorXd c;
        if (constant) c = view(constant, m);
        const auto policy_kind = static_cast<rpcbf::PolicyKind>(kind);
        *out = new rpcbf_policy{system->impl, rpcbf::make_policy(sys, policy_kind, k, c)};
    });
}

void rpcbf_policy_free(rpcbf_policy* policy) { delete policy; }

int rpcbf_policy_act(const rpcbf_policy* policy, const double* x, double* u) {
    if (!policy || !x || !u) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const Eigen::VectorXd out = policy->impl->act(view(x, policy->system->state_dim()));
        std::memcpy(u, out.data(), sizeof(double) * static_cast<std::size_t>(out.size()));
    });
}

void rpcbf_value_config_default(rpcbf_value_config* config) {
    if (!config) return;
    *config = rpcbf_value_config{5.0, 0.1, 1, 0.5, 0, RPCBF_MAX_SPLINE, 0};
}

int rpcbf_evaluate(const rpcbf_system* system, const rpcbf_policy* rollout_policy, const rpcbf_value_config* config,
                   const double* x0, double* value, double* gradient, int* argmax_sample, double* argmax_time) {
    if (!system || !rollout_policy || !config || !x0 || !value || !gradient)
        return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        const auto& sys = *system->impl;
        const auto est = rpcbf::evaluate(sys, to_value_config(config, rollout_policy), view(x0, sys.state_dim()));
        *value = est.value;
        std::memcpy(gradient, est.gradient.data(), sizeof(double) * static_cast<std::size_t>(sys.state_dim()));
        if (argmax_sample) *argmax_sample = est.argmax_sample;
        if (argmax_time) *argmax_time = est.argmax_time;
    });
}

int rpcbf_filter_step(const rpcbf_system* system, const rpcbf_policy* rollout_policy,
                      const rpcbf_policy* nominal_policy, const rpcbf_value_config* config, double alpha, int mode,
                      const double* x, double dt_control, double* u, int* status, double* value) {
    if (!system || !rollout_policy || !nominal_policy || !config || !x || !u)
        return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    if (mode != RPCBF_MODE_NOMINAL_D && mode != RPCBF_MODE_WORST_VERTEX)
        return fail(RPCBF_ERR_INVALID_ARGUMENT, "unknown constraint mode");
    return guarded([&] {
        const auto& sys = *system->impl;
        const auto m = mode == RPCBF_MODE_WORST_VERTEX ? rpcbf::ConstraintMode::worst_vertex
                                                       : rpcbf::ConstraintMode::nominal_d;
        const auto step = rpcbf::step_filtered(sys, *nominal_policy->impl, to_value_config(config, rollout_policy),
                                               rpcbf::AlphaFn{alpha}, m, view(x, sys.state_dim()), dt_control);
        std::memcpy(u, step.u.data(), sizeof(double) * static_cast<std::size_t>(sys.control_dim()));
        if (status) *status = static_cast<int>(step.decision.status);
        if (value) *value = step.estimate.value;
    });
}

int rpcbf_experiment_load(const char* path, rpcbf_experiment** out) {
    if (!path || !out) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { *out = new rpcbf_experiment{rpcbf::lab::load_config(path)}; });
}

int rpcbf_experiment_parse(const char* json_text, rpcbf_experiment** out) {
    if (!json_text || !out) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(json_text);
        } catch (const nlohmann::json::parse_error& e) {
            throw rpcbf::Error(rpcbf::ErrorCode::config, e.what());
        }
        *out = new rpcbf_experiment{rpcbf::lab::parse_config(doc)};
    });
}

void rpcbf_experiment_free(rpcbf_experiment* experiment) { delete experiment; }

int rpcbf_experiment_set_seed(rpcbf_experiment* experiment, uint64_t seed) {
    if (!experiment) return fail(RPCBF_ERR_INVALID_ARGUMENT, "experiment is null");
    rpcbf::lab::set_seed(experiment->config, seed);
    return RPCBF_OK;
}

int rpcbf_experiment_state_dim(const rpcbf_experiment* experiment, int* state_dim) {
    if (!experiment || !state_dim) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    *state_dim = experiment->config.system->state_dim();
    return RPCBF_OK;
}

int rpcbf_experiment_run(const rpcbf_experiment* experiment, const char* command, const char* out_dir,
                         const double* state, int state_len, int* cell_errors) {
    if (!experiment || !command || !out_dir) return fail(RPCBF_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] {
        namespace lab = rpcbf::lab;
        const auto& cfg = experiment->config;
        const std::string cmd = command;
        int errors = 0;
        if (cmd == "value") {
            if (!state || state_len != cfg.system->state_dim())
                throw rpcbf::Error(rpcbf::ErrorCode::invalid_argument,
                                   "value needs a state with " + std::to_string(cfg.system->state_dim()) +
                                       " components");
            errors = lab::run_value(cfg, view(state, state_len), out_dir);
        } else if (cmd == "sweep-boundary") {
            errors = lab::run_sweep_boundary(cfg, out_dir);
        } else if (cmd == "sweep-safe-region") {
            errors = lab::run_sweep_safe_region(cfg, out_dir);
        } else if (cmd == "grad-study") {
            errors = lab::run_grad_study(cfg, out_dir);
        } else if (cmd == "simulate") {
            errors = lab::run_simulate(cfg, out_dir);
        } else {
            throw rpcbf::Error(rpcbf::ErrorCode::invalid_argument, "unknown command '" + cmd + "'");
        }
        if (cell_errors) *cell_errors = errors;
    });
}

}  // extern "C"
