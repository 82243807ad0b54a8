#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "rpcbf/systems.hpp"

namespace rpcbf {

// Stateless seed derivation (splitmix64 finalizer). Distinct (stream, index)
// pairs give independent streams from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

// Seed streams used across the library.
namespace streams {
inline constexpr std::uint64_t disturbance = 0x6469737475726221ULL;
inline constexpr std::uint64_t control_step = 0x6374726c73746570ULL;
inline constexpr std::uint64_t plant = 0x706c616e74000001ULL;
}  // namespace streams

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    bool coin() { return (engine_() >> 63) != 0; }

private:
    std::mt19937_64 engine_;
};

// Piecewise-constant disturbance: column k holds d over [k dt, (k+1) dt).
struct DisturbanceTrajectory {
    MatrixXd values;

    int steps() const { return static_cast<int>(values.cols()); }
    auto at(int k) const { return values.col(k); }
};

// Draws `count` trajectories of `horizon_steps` values each. Every step is
// independently a uniform random box vertex (probability vertex_weight) or a
// uniform point in the box. Trajectory 0 is the constant all-lower vertex and
// trajectory 1 the constant all-upper vertex. Trajectory i depends only on
// (seed, i), so prefixes and subsets are shared between calls.
std::vector<DisturbanceTrajectory> sample_disturbances(const SystemModel& system, int horizon_steps, int count,
                                                       double vertex_weight, std::uint64_t seed);

DisturbanceTrajectory constant_disturbance(const ConstVecRef& d, int horizon_steps);

struct RolloutResult {
    MatrixXd states;                     // n x H
    VectorXd h_values;                   // H
    std::vector<MatrixXd> sensitivities; // d x_k / d x_0, empty unless requested
    double dt = 0.0;

    int steps() const { return static_cast<int>(states.cols()); }
};

// Classic fixed-step RK4 for xdot = f(x, d) + g(x, d) u. The closed-loop form
// evaluates the policy at every stage; the held form keeps u fixed over the
// step. `step_jacobian`, when non-null, receives the exact Jacobian of the
// discrete step map. Holds scratch buffers, so one instance per thread.
class Rk4Integrator {
public:
    Rk4Integrator(const SystemModel& system, const Policy* policy);

    void step(const ConstVecRef& x, const ConstVecRef& d, double dt, VecRef x_next,
              MatrixXd* step_jacobian = nullptr);
    void step_held(const ConstVecRef& x, const ConstVecRef& d, const ConstVecRef& u, double dt, VecRef x_next);

private:
    void field(const ConstVecRef& x, const ConstVecRef& d, const VectorXd* held_u, VecRef out, MatrixXd* jacobian);
    void advance(const ConstVecRef& x, const ConstVecRef& d, const VectorXd* held_u, double dt, VecRef x_next,
                 MatrixXd* step_jacobian);

    const SystemModel& system_;
    const Policy* policy_;
    VectorXd f_, u_, held_, stage_, k1_, k2_, k3_, k4_;
    MatrixXd g_, jf_, jgu_, jpi_;
    MatrixXd dk1_, dk2_, dk3_, dk4_, lift_;
};

// Closed-loop rollout of `policy` from x0 over H knots x_0 .. x_{H-1}.
// Throws Error(diverged) with `step` set if a state becomes non-finite.
RolloutResult rollout(const SystemModel& system, const Policy& policy, const ConstVecRef& x0,
                      const DisturbanceTrajectory& disturbance, double dt, int horizon_steps,
                      bool with_sensitivities);

// Same trajectory as rollout() but only records h(x_k) into `h_out` (size H).
void constraint_trace(const SystemModel& system, Rk4Integrator& integrator, const ConstVecRef& x0,
                      const DisturbanceTrajectory& disturbance, double dt, int horizon_steps, VecRef h_out);

}  // namespace rpcbf
