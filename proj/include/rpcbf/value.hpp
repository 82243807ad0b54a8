#pragma once

#include <cstdint>
#include <vector>

#include "rpcbf/rollout.hpp"
#include "rpcbf/spline.hpp"
#include "rpcbf/systems.hpp"

namespace rpcbf {

// How the supremum over [0, T) is taken from the knot samples.
enum class TemporalMax { spline, discrete };

struct ValueConfig {
    double horizon = 5.0;   // T, seconds
    double dt = 0.1;        // rollout step
    int num_samples = 1;    // N
    double vertex_weight = 0.5;
    PolicyPtr policy;       // rollout policy
    std::uint64_t seed = 0;
    TemporalMax maximizer = TemporalMax::spline;
    // When set, evaluate() ignores the sampler and uses a single rollout at
    // the disturbance box midpoint (the undisturbed policy CBF).
    bool undisturbed = false;

    // H = T / dt. Throws unless T / dt is an integer >= 2 up to rounding.
    int horizon_steps() const;
    void validate(const SystemModel& system) const;
};

struct ValueEstimate {
    double value = 0.0;
    VectorXd gradient;
    int argmax_sample = 0;   // zero-based
    double argmax_time = 0.0;
};

// Finite-horizon, finite-sample robust value: the largest spline maximum of
// h over N sampled disturbance rollouts, with its gradient through the
// winning sample's sensitivities and envelope weights.
ValueEstimate evaluate(const SystemModel& system, const ValueConfig& config, const ConstVecRef& x0);

// Same machinery on an explicit sample set (first `samples.size()` used).
ValueEstimate evaluate_samples(const SystemModel& system, const ValueConfig& config, const ConstVecRef& x0,
                               const std::vector<DisturbanceTrajectory>& samples);

// Undisturbed special case: one rollout at the disturbance box midpoint.
ValueEstimate evaluate_pcbf(const SystemModel& system, const ValueConfig& config, const ConstVecRef& x0);

}  // namespace rpcbf
