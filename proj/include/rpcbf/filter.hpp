#pragma once

#include <cstdint>

#include "rpcbf/systems.hpp"
#include "rpcbf/value.hpp"

namespace rpcbf {

// Linear class-K function alpha(b) = coefficient * b.
struct AlphaFn {
    double coefficient = 1.0;

    double operator()(double b) const { return coefficient * b; }
};

enum class FilterStatus { nominal_pass = 0, constraint_active = 1, infeasible_fallback = 2 };

// Disturbance used for f and g inside the QP constraint.
//   nominal_d:    the disturbance box midpoint
//   worst_vertex: the box vertex whose constraint is most violated at the
//                 clipped nominal control; among ties or near-ties, the first
//                 vertex (by violation) whose projection satisfies all
//                 vertex constraints
enum class ConstraintMode { nominal_d, worst_vertex };

struct FilterDecision {
    VectorXd u;
    FilterStatus status = FilterStatus::nominal_pass;
    double slack = 0.0;  // a . u + b at the returned u
};

// Solves min ||u - u_nom||^2 s.t. a . u + b <= 0, u in box, exactly.
// The minimizer is clip(u_nom - lambda a) for the smallest feasible
// lambda >= 0; a . u(lambda) + b is piecewise linear and nonincreasing, so
// lambda is found by walking the clipping breakpoints. When no lambda is
// feasible the box point minimizing a . u is returned (coordinates with
// a_i = 0 keep the clipped nominal) with status infeasible_fallback.
FilterDecision project_halfspace_box(const ConstVecRef& a, double b, const ConstVecRef& u_nom, const Box& box);

// CBF-QP: grad . (f(x, d) + g(x, d) u) + alpha(value) <= 0.
FilterDecision cbf_qp(const SystemModel& system, double value, const ConstVecRef& gradient, const ConstVecRef& x,
                      const ConstVecRef& u_nom, AlphaFn alpha, ConstraintMode mode);

// Higher-order CBF baseline for the double integrator. For each face
// h = +-p - bound: psi1 = hdot + alpha1 h, and psi1dot + alpha2 psi1 <= 0
// is linear in u (nominal mass). Input bounds are not accounted for.
FilterDecision hocbf_di(const SystemModel& system, const ConstVecRef& x, const ConstVecRef& u_nom, double alpha1,
                        double alpha2);

// max over faces of max(h, psi1); its zero sublevel set is the HOCBF safe set.
double hocbf_di_barrier(const SystemModel& system, const ConstVecRef& x, double alpha1);

struct FilteredStep {
    VectorXd u;
    FilterDecision decision;
    ValueEstimate estimate;
};

// One control period: evaluates the value and its gradient at x, then runs
// the CBF-QP on the nominal policy's control.
FilteredStep step_filtered(const SystemModel& system, const Policy& nominal, const ValueConfig& config, AlphaFn alpha,
                           ConstraintMode mode, const ConstVecRef& x, double dt_control);

}  // namespace rpcbf
