#include "rpcbf/value.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rpcbf/error.hpp"

namespace rpcbf {

int ValueConfig::horizon_steps() const {
    require(dt > 0.0 && std::isfinite(dt), "value dt must be positive");
    require(horizon > 0.0 && std::isfinite(horizon), "value horizon must be positive");
    const double ratio = horizon / dt;
    const double steps = std::round(ratio);
    require(std::abs(ratio - steps) <= 1e-9 * steps, "value horizon must be an integer multiple of dt");
    require(steps >= 2.0, "value horizon must span at least two knots");
    return static_cast<int>(steps);
}

void ValueConfig::validate(const SystemModel& system) const {
    horizon_steps();
    require(num_samples >= 1, "value needs at least one disturbance sample");
    require(vertex_weight >= 0.0 && vertex_weight <= 1.0, "vertex weight must lie in [0, 1]");
    require(policy != nullptr, "value config needs a rollout policy");
    require(policy->control_dim() == system.control_dim(), "rollout policy control dimension mismatch");
}

namespace {

double temporal_max(TemporalMax kind, const VectorXd& h, double dt) {
    return kind == TemporalMax::spline ? spline_max_value(h, dt) : naive_max(h).value;
}

}  // namespace

ValueEstimate evaluate_samples(const SystemModel& system, const ValueConfig& config, const ConstVecRef& x0,
                               const std::vector<DisturbanceTrajectory>& samples) {
    config.validate(system);
    require(x0.size() == system.state_dim(), "state dimension mismatch");
    require(x0.allFinite(), "state must be finite");
    require(!samples.empty(), "value needs at least one disturbance sample");
    const int steps = config.horizon_steps();
    const double dt = config.dt;
    const Policy& policy = *config.policy;

    // Value pass: h traces only. Sensitivities are recomputed for the winner.
    Rk4Integrator integrator(system, &policy);
    VectorXd h(steps);
    double best = -std::numeric_limits<double>::infinity();
    int winner = 0;
    for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
        try {
            constraint_trace(system, integrator, x0, samples[i], dt, steps, h);
        } catch (Error& err) {
            err.sample = i;
            throw;
        }
        const double v = temporal_max(config.maximizer, h, dt);
        if (v > best) {
            best = v;
            winner = i;
        }
    }

    const RolloutResult run = rollout(system, policy, x0, samples[winner], dt, steps, true);
    ValueEstimate out;
    out.argmax_sample = winner;
    VectorXd weights;
    if (config.maximizer == TemporalMax::spline) {
        SplineMax sm = spline_max(run.h_values, dt);
        out.value = sm.value;
        out.argmax_time = sm.time;
        weights = std::move(sm.weights);
    } else {
        const DiscreteMax dm = naive_max(run.h_values);
        out.value = dm.value;
        out.argmax_time = dm.index * dt;
        weights = VectorXd::Unit(steps, dm.index);
    }

    const int n = system.state_dim();
    out.gradient = VectorXd::Zero(n);
    VectorXd grad_h(n);
    for (int k = 0; k < steps; ++k) {
        if (weights[k] == 0.0) continue;
        system.constraint_gradient(run.states.col(k), grad_h);
        out.gradient.noalias() += weights[k] * (run.sensitivities[k].transpose() * grad_h);
    }
    return out;
}

ValueEstimate evaluate(const SystemModel& system, const ValueConfig& config, const ConstVecRef& x0) {
    if (config.undisturbed) return evaluate_pcbf(system, config, x0);
    config.validate(system);
    const int steps = config.horizon_steps();
    const auto samples = sample_disturbances(system, steps, config.num_samples, config.vertex_weight, config.seed);
    return evaluate_samples(system, config, x0, samples);
}

ValueEstimate evaluate_pcbf(const SystemModel& system, const ValueConfig& config, const ConstVecRef& x0) {
    config.validate(system);
    const int steps = config.horizon_steps();
    const std::vector<DisturbanceTrajectory> nominal{
        constant_disturbance(system.disturbance_box().midpoint(), steps)};
    return evaluate_samples(system, config, x0, nominal);
}

}  // namespace rpcbf
