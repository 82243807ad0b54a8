#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rpcbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstVecRef = Eigen::Ref<const VectorXd>;
using VecRef = Eigen::Ref<VectorXd>;
using MatRef = Eigen::Ref<MatrixXd>;

// Componentwise interval [lower, upper].
struct Box {
    VectorXd lower;
    VectorXd upper;

    int dim() const { return static_cast<int>(lower.size()); }
    VectorXd midpoint() const { return 0.5 * (lower + upper); }
    VectorXd clip(const ConstVecRef& v) const { return v.cwiseMax(lower).cwiseMin(upper); }
    bool contains(const ConstVecRef& v) const {
        return (v.array() >= lower.array()).all() && (v.array() <= upper.array()).all();
    }
    // Vertex `index` picks upper[i] where bit i is set.
    VectorXd vertex(unsigned index) const;
    unsigned vertex_count() const { return 1u << dim(); }
};

// One face of a box state constraint: scale * (sign * x[index] - bound).
struct ConstraintFace {
    int index = 0;
    double sign = 1.0;
    double bound = 0.0;
    double scale = 1.0;
};

// h(x) = max over faces. Ties resolve to the lowest face index.
class StateConstraint {
public:
    StateConstraint() = default;
    explicit StateConstraint(std::vector<ConstraintFace> faces);

    double value(const ConstVecRef& x) const;
    int active_face(const ConstVecRef& x) const;
    void gradient(const ConstVecRef& x, VecRef out) const;
    const std::vector<ConstraintFace>& faces() const { return faces_; }

private:
    std::vector<ConstraintFace> faces_;
};

// Disturbed control-affine system xdot = f(x, d) + g(x, d) u with box
// bounded controls and disturbances and an avoid set {h(x) > 0}.
// Implementations are immutable; all members are safe to call concurrently.
class SystemModel {
public:
    SystemModel(int state_dim, Box control_box, Box disturbance_box, StateConstraint constraint);
    virtual ~SystemModel() = default;

    int state_dim() const { return state_dim_; }
    int control_dim() const { return control_box_.dim(); }
    int disturbance_dim() const { return disturbance_box_.dim(); }
    const Box& control_box() const { return control_box_; }
    const Box& disturbance_box() const { return disturbance_box_; }
    const StateConstraint& state_constraint() const { return constraint_; }

    virtual std::string name() const = 0;
    virtual std::vector<std::string> state_names() const;

    virtual void drift(const ConstVecRef& x, const ConstVecRef& d, VecRef out) const = 0;
    virtual void input_map(const ConstVecRef& x, const ConstVecRef& d, MatRef out) const = 0;
    // d f / d x at fixed d.
    virtual void drift_jacobian(const ConstVecRef& x, const ConstVecRef& d, MatRef out) const = 0;
    // d (g(x, d) u) / d x at fixed d and u.
    virtual void input_map_jacobian(const ConstVecRef& x, const ConstVecRef& d, const ConstVecRef& u,
                                    MatRef out) const = 0;

    double constraint(const ConstVecRef& x) const { return constraint_.value(x); }
    void constraint_gradient(const ConstVecRef& x, VecRef out) const { constraint_.gradient(x, out); }

    // f(x, d) + g(x, d) u, allocating. Convenience for tests and tools.
    VectorXd dynamics(const ConstVecRef& x, const ConstVecRef& d, const ConstVecRef& u) const;

private:
    int state_dim_;
    Box control_box_;
    Box disturbance_box_;
    StateConstraint constraint_;
};

using SystemPtr = std::shared_ptr<const SystemModel>;

struct DoubleIntegratorParams {
    double mass_lo = 1.0;
    double mass_hi = 1.0;
    double position_bound = 1.0;
    double control_bound = 1.0;
    // false keeps only the upper face p - position_bound.
    bool two_sided = true;
};

// State [p, v], control a, disturbance m: pdot = v, vdot = a / m.
// h(x) = |p| - position_bound (faces ordered +p, -p).
SystemPtr make_double_integrator(const DoubleIntegratorParams& params);
SystemPtr make_double_integrator(double mass_lo, double mass_hi, double position_bound);

// Wheeled inverted pendulum. Wheel rolls without slip, motor torque acts
// between wheel and body, theta is the body tilt from upright (positive
// forward). The body mass is the scalar disturbance.
struct SegwayParams {
    double body_mass_lo = 18.0;    // kg, disturbance box; nominal is the midpoint
    double body_mass_hi = 22.0;
    double wheel_mass = 2.0;       // kg
    double wheel_radius = 0.25;    // m
    double wheel_inertia = 0.0625; // kg m^2, about the axle
    double com_height = 0.6;       // m, axle to body center of mass
    double body_inertia = 2.0;     // kg m^2, about the body center of mass
    double gravity = 9.81;
    double torque_bound = 30.0;    // N m, symmetric
    double position_bound = 2.0;   // m
    double angle_bound = 0.3 * 3.14159265358979323846;
    double position_scale = 0.5;   // 1 / position_bound
    double angle_scale = 1.0 / (0.3 * 3.14159265358979323846);
};

// State [p, theta, v, theta_dot], control torque.
// h(x) = max(position_scale (|p| - position_bound), angle_scale (|theta| - angle_bound)).
SystemPtr make_segway(const SegwayParams& params = {});

enum class PolicyKind { saturating_linear, constant, bang_bang };

// Feedback policy clipped to the control box.
//   saturating_linear: clip(-K x)
//   constant:          clip(u)
//   bang_bang:         per row i, upper_i if -(K x)_i > 0, lower_i if < 0, else clip(0)
class Policy {
public:
    Policy(PolicyKind kind, MatrixXd gains, VectorXd constant, Box control_box);

    PolicyKind kind() const { return kind_; }
    const MatrixXd& gains() const { return gains_; }
    const VectorXd& constant() const { return constant_; }
    int control_dim() const { return control_box_.dim(); }

    void act(const ConstVecRef& x, VecRef u) const;
    // Zero on rows that are saturated, including the exact boundary.
    void act_jacobian(const ConstVecRef& x, MatRef out) const;

    VectorXd act(const ConstVecRef& x) const;

private:
    PolicyKind kind_;
    MatrixXd gains_;
    VectorXd constant_;
    Box control_box_;
};

using PolicyPtr = std::shared_ptr<const Policy>;

// Gains are m x n for saturating_linear and bang_bang; `constant` is the
// m-vector for the constant kind. Throws on dimension mismatch.
PolicyPtr make_policy(const SystemModel& system, PolicyKind kind, const MatrixXd& gains,
                      const VectorXd& constant = VectorXd());

}  // namespace rpcbf
