#pragma once

#include "rpcbf/systems.hpp"

namespace rpcbf {

// Maximum of the cubic interpolant through (k dt, h_k), k = 0 .. H-1.
// `weights` is d value / d h at the maximizing time held fixed, so
// value == weights . h up to rounding.
struct SplineMax {
    double value = 0.0;
    double time = 0.0;
    int segment = 0;   // segment [segment dt, (segment + 1) dt] holding `time`
    int knot = -1;     // knot index when the maximum sits on a knot, else -1
    VectorXd weights;
};

// Not-a-knot cubic spline on a uniform grid; H = 2 is linear and H = 3 is
// the interpolating parabola. Candidates per segment are its endpoints and
// the real roots of the derivative inside it. Ties go to the smallest time.
// Throws for H < 2 or non-finite data.
SplineMax spline_max(const ConstVecRef& h_values, double dt);

// Value-only variant for hot loops; same result as spline_max().value.
double spline_max_value(const ConstVecRef& h_values, double dt);

struct DiscreteMax {
    double value = 0.0;
    int index = 0;
};

// Plain maximum over the samples, lowest index on ties. Throws if empty.
DiscreteMax naive_max(const ConstVecRef& h_values);

// Spline evaluation at time t in [0, (H-1) dt]; used by tests and the
// oversampling checks.
double spline_eval(const ConstVecRef& h_values, double dt, double t);

}  // namespace rpcbf
