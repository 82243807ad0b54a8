#include "rpcbf/rollout.hpp"

#include <string>

#include "rpcbf/error.hpp"

namespace rpcbf {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

[[noreturn]] void throw_diverged(int step) {
    Error err(ErrorCode::diverged, "rollout produced a non-finite state at step " + std::to_string(step));
    err.step = step;
    throw err;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return splitmix(splitmix(splitmix(master) ^ stream) ^ index);
}

std::vector<DisturbanceTrajectory> sample_disturbances(const SystemModel& system, int horizon_steps, int count,
                                                       double vertex_weight, std::uint64_t seed) {
    require(horizon_steps >= 1, "disturbance horizon must be at least one step");
    require(count >= 1, "disturbance sample count must be at least one");
    require(vertex_weight >= 0.0 && vertex_weight <= 1.0, "vertex weight must lie in [0, 1]");
    const Box& box = system.disturbance_box();
    const int dim = box.dim();

    std::vector<DisturbanceTrajectory> out(count);
    for (int i = 0; i < count; ++i) {
        MatrixXd& values = out[i].values;
        values.resize(dim, horizon_steps);
        if (i == 0) {
            values.colwise() = box.lower;
            continue;
        }
        if (i == 1) {
            values.colwise() = box.upper;
            continue;
        }
        Rng rng(derive_seed(seed, streams::disturbance, static_cast<std::uint64_t>(i)));
        for (int k = 0; k < horizon_steps; ++k) {
            const bool vertex = rng.uniform() < vertex_weight;
            for (int j = 0; j < dim; ++j) {
                if (vertex) values(j, k) = rng.coin() ? box.upper[j] : box.lower[j];
                else values(j, k) = box.lower[j] + rng.uniform() * (box.upper[j] - box.lower[j]);
            }
        }
    }
    return out;
}

DisturbanceTrajectory constant_disturbance(const ConstVecRef& d, int horizon_steps) {
    DisturbanceTrajectory out;
    out.values.resize(d.size(), horizon_steps);
    out.values.colwise() = d;
    return out;
}

Rk4Integrator::Rk4Integrator(const SystemModel& system, const Policy* policy) : system_(system), policy_(policy) {
    const int n = system.state_dim(), m = system.control_dim();
    for (VectorXd* v : {&f_, &stage_, &k1_, &k2_, &k3_, &k4_}) v->resize(n);
    u_.resize(m);
    held_.resize(m);
    g_.resize(n, m);
    jpi_.resize(m, n);
    for (MatrixXd* mat : {&jf_, &jgu_, &dk1_, &dk2_, &dk3_, &dk4_, &lift_}) mat->resize(n, n);
}

void Rk4Integrator::field(const ConstVecRef& x, const ConstVecRef& d, const VectorXd* held_u, VecRef out,
                          MatrixXd* jacobian) {
    if (held_u) u_ = *held_u;
    else policy_->act(x, u_);
    system_.drift(x, d, f_);
    system_.input_map(x, d, g_);
    out = f_;
    out.noalias() += g_ * u_;
    if (!jacobian) return;
    system_.drift_jacobian(x, d, jf_);
    system_.input_map_jacobian(x, d, u_, jgu_);
    *jacobian = jf_ + jgu_;
    if (!held_u) {
        policy_->act_jacobian(x, jpi_);
        jacobian->noalias() += g_ * jpi_;
    }
}

void Rk4Integrator::advance(const ConstVecRef& x, const ConstVecRef& d, const VectorXd* held_u, double dt,
                            VecRef x_next, MatrixXd* step_jacobian) {
    const bool jac = step_jacobian != nullptr;
    field(x, d, held_u, k1_, jac ? &dk1_ : nullptr);
    stage_ = x + 0.5 * dt * k1_;
    field(stage_, d, held_u, k2_, jac ? &dk2_ : nullptr);
    stage_ = x + 0.5 * dt * k2_;
    field(stage_, d, held_u, k3_, jac ? &dk3_ : nullptr);
    stage_ = x + dt * k3_;
    field(stage_, d, held_u, k4_, jac ? &dk4_ : nullptr);
    x_next = x + (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);

    if (!jac) return;
    // Chain rule through the stages: dk_s = J_s (I + c_s dt dk_{s-1}).
    const auto eye = MatrixXd::Identity(x.size(), x.size());
    lift_ = eye + 0.5 * dt * dk1_;
    dk2_ = (dk2_ * lift_).eval();
    lift_ = eye + 0.5 * dt * dk2_;
    dk3_ = (dk3_ * lift_).eval();
    lift_ = eye + dt * dk3_;
    dk4_ = (dk4_ * lift_).eval();
    *step_jacobian = eye + (dt / 6.0) * (dk1_ + 2.0 * dk2_ + 2.0 * dk3_ + dk4_);
}

void Rk4Integrator::step(const ConstVecRef& x, const ConstVecRef& d, double dt, VecRef x_next,
                         MatrixXd* step_jacobian) {
    advance(x, d, nullptr, dt, x_next, step_jacobian);
}

void Rk4Integrator::step_held(const ConstVecRef& x, const ConstVecRef& d, const ConstVecRef& u, double dt,
                              VecRef x_next) {
    held_ = u;
    advance(x, d, &held_, dt, x_next, nullptr);
}

RolloutResult rollout(const SystemModel& system, const Policy& policy, const ConstVecRef& x0,
                      const DisturbanceTrajectory& disturbance, double dt, int horizon_steps,
                      bool with_sensitivities) {
    require(dt > 0.0, "rollout step must be positive");
    require(horizon_steps >= 1, "rollout horizon must be at least one knot");
    require(disturbance.steps() >= horizon_steps - 1, "disturbance trajectory is shorter than the horizon");
    require(disturbance.values.rows() == system.disturbance_dim(), "disturbance dimension mismatch");
    require(x0.size() == system.state_dim(), "initial state dimension mismatch");
    require(policy.control_dim() == system.control_dim(), "policy control dimension mismatch");

    const int n = system.state_dim();
    RolloutResult out;
    out.dt = dt;
    out.states.resize(n, horizon_steps);
    out.h_values.resize(horizon_steps);
    out.states.col(0) = x0;
    if (!x0.allFinite()) throw_diverged(0);
    if (with_sensitivities) out.sensitivities.assign(1, MatrixXd::Identity(n, n));

    Rk4Integrator integrator(system, &policy);
    MatrixXd step_jac(n, n);
    VectorXd x = x0, next(n);
    for (int k = 0; k + 1 < horizon_steps; ++k) {
        integrator.step(x, disturbance.at(k), dt, next, with_sensitivities ? &step_jac : nullptr);
        if (!next.allFinite()) throw_diverged(k + 1);
        x.swap(next);
        out.states.col(k + 1) = x;
        if (with_sensitivities) out.sensitivities.push_back(step_jac * out.sensitivities.back());
    }
    for (int k = 0; k < horizon_steps; ++k) out.h_values[k] = system.constraint(out.states.col(k));
    return out;
}

void constraint_trace(const SystemModel& system, Rk4Integrator& integrator, const ConstVecRef& x0,
                      const DisturbanceTrajectory& disturbance, double dt, int horizon_steps, VecRef h_out) {
    VectorXd x = x0, next(x0.size());
    h_out[0] = system.constraint(x);
    for (int k = 0; k + 1 < horizon_steps; ++k) {
        integrator.step(x, disturbance.at(k), dt, next, nullptr);
        if (!next.allFinite()) throw_diverged(k + 1);
        x.swap(next);
        h_out[k + 1] = system.constraint(x);
    }
}

}  // namespace rpcbf
