#include "rpcbf/systems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "rpcbf/error.hpp"

namespace rpcbf {

VectorXd Box::vertex(unsigned index) const {
    VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = ((index >> i) & 1u) ? upper[i] : lower[i];
    return v;
}

StateConstraint::StateConstraint(std::vector<ConstraintFace> faces) : faces_(std::move(faces)) {
    require(!faces_.empty(), "state constraint needs at least one face");
    for (const auto& face : faces_) require(face.scale > 0.0, "constraint face scale must be positive");
}

int StateConstraint::active_face(const ConstVecRef& x) const {
    int best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(faces_.size()); ++i) {
        const auto& face = faces_[i];
        const double v = face.scale * (face.sign * x[face.index] - face.bound);
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }
    return best;
}

double StateConstraint::value(const ConstVecRef& x) const {
    const auto& face = faces_[active_face(x)];
    return face.scale * (face.sign * x[face.index] - face.bound);
}

void StateConstraint::gradient(const ConstVecRef& x, VecRef out) const {
    const auto& face = faces_[active_face(x)];
    out.setZero();
    out[face.index] = face.scale * face.sign;
}

SystemModel::SystemModel(int state_dim, Box control_box, Box disturbance_box, StateConstraint constraint)
    : state_dim_(state_dim),
      control_box_(std::move(control_box)),
      disturbance_box_(std::move(disturbance_box)),
      constraint_(std::move(constraint)) {
    require(state_dim_ > 0, "state dimension must be positive");
    require(control_box_.dim() > 0 && control_box_.upper.size() == control_box_.lower.size(),
            "control box is malformed");
    require(disturbance_box_.dim() > 0 && disturbance_box_.upper.size() == disturbance_box_.lower.size(),
            "disturbance box is malformed");
    require((control_box_.lower.array() <= control_box_.upper.array()).all(), "control box needs lower <= upper");
    require((disturbance_box_.lower.array() <= disturbance_box_.upper.array()).all(),
            "disturbance box needs lower <= upper");
    for (const auto& face : constraint_.faces())
        require(face.index >= 0 && face.index < state_dim_, "constraint face index out of range");
}

std::vector<std::string> SystemModel::state_names() const {
    std::vector<std::string> out;
    for (int i = 0; i < state_dim_; ++i) out.push_back("x" + std::to_string(i));
    return out;
}

VectorXd SystemModel::dynamics(const ConstVecRef& x, const ConstVecRef& d, const ConstVecRef& u) const {
    VectorXd f(state_dim());
    MatrixXd g(state_dim(), control_dim());
    drift(x, d, f);
    input_map(x, d, g);
    return f + g * u;
}

namespace {

Box symmetric_box(int dim, double bound) {
    return Box{VectorXd::Constant(dim, -bound), VectorXd::Constant(dim, bound)};
}

class DoubleIntegrator final : public SystemModel {
public:
    DoubleIntegrator(const DoubleIntegratorParams& p, StateConstraint constraint)
        : SystemModel(2, symmetric_box(1, p.control_bound),
                      Box{VectorXd::Constant(1, p.mass_lo), VectorXd::Constant(1, p.mass_hi)},
                      std::move(constraint)) {}

    std::string name() const override { return "double_integrator"; }
    std::vector<std::string> state_names() const override { return {"p", "v"}; }

    void drift(const ConstVecRef& x, const ConstVecRef&, VecRef out) const override {
        out[0] = x[1];
        out[1] = 0.0;
    }
    void input_map(const ConstVecRef&, const ConstVecRef& d, MatRef out) const override {
        out(0, 0) = 0.0;
        out(1, 0) = 1.0 / d[0];
    }
    void drift_jacobian(const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
        out << 0.0, 1.0, 0.0, 0.0;
    }
    void input_map_jacobian(const ConstVecRef&, const ConstVecRef&, const ConstVecRef&,
                            MatRef out) const override {
        out.setZero();
    }
};

class Segway final : public SystemModel {
public:
    Segway(const SegwayParams& p, StateConstraint constraint)
        : SystemModel(4, symmetric_box(1, p.torque_bound),
                      Box{VectorXd::Constant(1, p.body_mass_lo), VectorXd::Constant(1, p.body_mass_hi)},
                      std::move(constraint)),
          p_(p) {}

    std::string name() const override { return "segway"; }
    std::vector<std::string> state_names() const override { return {"p", "theta", "v", "theta_dot"}; }

    void drift(const ConstVecRef& x, const ConstVecRef& d, VecRef out) const override {
        const Terms t = terms(x, d[0]);
        const Eigen::Vector2d acc = t.inverse * t.bias;
        out << x[2], x[3], acc[0], acc[1];
    }

    void input_map(const ConstVecRef& x, const ConstVecRef& d, MatRef out) const override {
        const Terms t = terms(x, d[0]);
        const Eigen::Vector2d acc = t.inverse * t.torque_map;
        out(0, 0) = 0.0;
        out(1, 0) = 0.0;
        out(2, 0) = acc[0];
        out(3, 0) = acc[1];
    }

    void drift_jacobian(const ConstVecRef& x, const ConstVecRef& d, MatRef out) const override {
        const Terms t = terms(x, d[0]);
        const Eigen::Vector2d acc = t.inverse * t.bias;
        const double m = d[0], l = p_.com_height, s = std::sin(x[1]), c = std::cos(x[1]), w = x[3];
        const Eigen::Vector2d dbias_dtheta(m * l * c * w * w, m * p_.gravity * l * c);
        const Eigen::Vector2d dbias_domega(2.0 * m * l * s * w, 0.0);
        out.setZero();
        out(0, 2) = 1.0;
        out(1, 3) = 1.0;
        out.block<2, 1>(2, 1) = t.inverse * (dbias_dtheta - t.dmass_dtheta * acc);
        out.block<2, 1>(2, 3) = t.inverse * dbias_domega;
    }

    void input_map_jacobian(const ConstVecRef& x, const ConstVecRef& d, const ConstVecRef& u,
                            MatRef out) const override {
        const Terms t = terms(x, d[0]);
        const Eigen::Vector2d acc = t.inverse * t.torque_map * u[0];
        out.setZero();
        out.block<2, 1>(2, 1) = -t.inverse * (t.dmass_dtheta * acc);
    }

private:
    struct Terms {
        Eigen::Matrix2d inverse;       // mass matrix inverse
        Eigen::Matrix2d dmass_dtheta;
        Eigen::Vector2d bias;          // gravity and centripetal terms
        Eigen::Vector2d torque_map;
    };

    Terms terms(const ConstVecRef& x, double body_mass) const {
        const double m = body_mass, l = p_.com_height, r = p_.wheel_radius;
        const double s = std::sin(x[1]), c = std::cos(x[1]), w = x[3];
        const double total = m + p_.wheel_mass + p_.wheel_inertia / (r * r);
        const double pitch = p_.body_inertia + m * l * l;
        const double coupling = m * l * c;
        const double det = total * pitch - coupling * coupling;
        Terms t;
        t.inverse << pitch / det, -coupling / det, -coupling / det, total / det;
        t.dmass_dtheta << 0.0, -m * l * s, -m * l * s, 0.0;
        t.bias << m * l * s * w * w, m * p_.gravity * l * s;
        t.torque_map << 1.0 / r, -1.0;
        return t;
    }

    SegwayParams p_;
};

}  // namespace

SystemPtr make_double_integrator(const DoubleIntegratorParams& params) {
    require(params.mass_lo > 0.0, "double integrator mass range must be positive");
    require(params.mass_lo <= params.mass_hi, "double integrator mass range needs lo <= hi");
    require(params.position_bound > 0.0 || !params.two_sided, "position bound must be positive");
    require(params.control_bound > 0.0, "control bound must be positive");
    std::vector<ConstraintFace> faces{{0, 1.0, params.position_bound, 1.0}};
    if (params.two_sided) faces.push_back({0, -1.0, params.position_bound, 1.0});
    return std::make_shared<DoubleIntegrator>(params, StateConstraint(std::move(faces)));
}

SystemPtr make_double_integrator(double mass_lo, double mass_hi, double position_bound) {
    DoubleIntegratorParams params;
    params.mass_lo = mass_lo;
    params.mass_hi = mass_hi;
    params.position_bound = position_bound;
    return make_double_integrator(params);
}

SystemPtr make_segway(const SegwayParams& p) {
    for (double v : {p.body_mass_lo, p.wheel_mass, p.wheel_radius, p.wheel_inertia, p.com_height,
                     p.body_inertia, p.gravity, p.torque_bound, p.position_bound, p.angle_bound,
                     p.position_scale, p.angle_scale})
        require(v > 0.0 && std::isfinite(v), "segway parameters must be positive and finite");
    require(p.body_mass_lo <= p.body_mass_hi, "segway mass range needs lo <= hi");
    std::vector<ConstraintFace> faces{
        {0, 1.0, p.position_bound, p.position_scale},
        {0, -1.0, p.position_bound, p.position_scale},
        {1, 1.0, p.angle_bound, p.angle_scale},
        {1, -1.0, p.angle_bound, p.angle_scale},
    };
    return std::make_shared<Segway>(p, StateConstraint(std::move(faces)));
}

Policy::Policy(PolicyKind kind, MatrixXd gains, VectorXd constant, Box control_box)
    : kind_(kind), gains_(std::move(gains)), constant_(std::move(constant)), control_box_(std::move(control_box)) {}

void Policy::act(const ConstVecRef& x, VecRef u) const {
    switch (kind_) {
    case PolicyKind::constant:
        u = control_box_.clip(constant_);
        return;
    case PolicyKind::saturating_linear:
        u.noalias() = -gains_ * x;
        u = u.cwiseMax(control_box_.lower).cwiseMin(control_box_.upper);
        return;
    case PolicyKind::bang_bang:
        u.noalias() = -gains_ * x;
        for (int i = 0; i < u.size(); ++i) {
            const double s = u[i];
            if (s > 0.0) u[i] = control_box_.upper[i];
            else if (s < 0.0) u[i] = control_box_.lower[i];
            else u[i] = std::clamp(0.0, control_box_.lower[i], control_box_.upper[i]);
        }
        return;
    }
}

VectorXd Policy::act(const ConstVecRef& x) const {
    VectorXd u(control_dim());
    act(x, u);
    return u;
}

void Policy::act_jacobian(const ConstVecRef& x, MatRef out) const {
    out.setZero();
    if (kind_ != PolicyKind::saturating_linear) return;
    for (int i = 0; i < gains_.rows(); ++i) {
        const double raw = -gains_.row(i).dot(x);
        if (raw > control_box_.lower[i] && raw < control_box_.upper[i]) out.row(i) = -gains_.row(i);
    }
}

PolicyPtr make_policy(const SystemModel& system, PolicyKind kind, const MatrixXd& gains, const VectorXd& constant) {
    const int m = system.control_dim(), n = system.state_dim();
    if (kind == PolicyKind::constant) {
        require(constant.size() == m, "constant policy needs a control-dimension vector");
        return std::make_shared<Policy>(kind, MatrixXd::Zero(m, n), constant, system.control_box());
    }
    require(gains.rows() == m && gains.cols() == n, "policy gains must be control_dim x state_dim");
    require(gains.allFinite(), "policy gains must be finite");
    return std::make_shared<Policy>(kind, gains, VectorXd::Zero(m), system.control_box());
}

}  // namespace rpcbf
