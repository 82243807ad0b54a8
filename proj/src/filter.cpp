#include "rpcbf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rpcbf/error.hpp"

namespace rpcbf {

namespace {

VectorXd clip_path(const ConstVecRef& a, const ConstVecRef& u_nom, const Box& box, double lambda) {
    return (u_nom - lambda * a).cwiseMax(box.lower).cwiseMin(box.upper);
}

}  // namespace

FilterDecision project_halfspace_box(const ConstVecRef& a, double b, const ConstVecRef& u_nom, const Box& box) {
    const int m = box.dim();
    require(a.size() == m && u_nom.size() == m, "projection dimension mismatch");
    require(a.allFinite() && std::isfinite(b), "constraint must be finite");
    require(u_nom.allFinite(), "nominal control must be finite");

    FilterDecision out;
    out.u = box.clip(u_nom);
    out.slack = a.dot(out.u) + b;
    if (out.slack <= 0.0) {
        out.status = FilterStatus::nominal_pass;
        return out;
    }

    // Least-violating box point; also the end of the clipping path.
    VectorXd floor_point = out.u;
    for (int i = 0; i < m; ++i) {
        if (a[i] > 0.0) floor_point[i] = box.lower[i];
        else if (a[i] < 0.0) floor_point[i] = box.upper[i];
    }
    const double floor_slack = a.dot(floor_point) + b;
    if (floor_slack > 0.0) {
        out.u = floor_point;
        out.slack = floor_slack;
        out.status = FilterStatus::infeasible_fallback;
        return out;
    }

    std::vector<double> breaks;
    for (int i = 0; i < m; ++i) {
        if (a[i] == 0.0) continue;
        for (double edge : {box.lower[i], box.upper[i]}) {
            const double lambda = (u_nom[i] - edge) / a[i];
            if (lambda > 0.0) breaks.push_back(lambda);
        }
    }
    std::sort(breaks.begin(), breaks.end());

    double lo = 0.0, lo_slack = out.slack;
    double lambda = breaks.empty() ? 0.0 : breaks.back();
    for (double brk : breaks) {
        const double brk_slack = a.dot(clip_path(a, u_nom, box, brk)) + b;
        if (brk_slack <= 0.0) {
            // Linear on [lo, brk].
            lambda = lo + (brk - lo) * lo_slack / (lo_slack - brk_slack);
            break;
        }
        lo = brk;
        lo_slack = brk_slack;
    }

    out.u = clip_path(a, u_nom, box, lambda);
    out.slack = a.dot(out.u) + b;
    // Rounding can leave the root a few ulps infeasible; push lambda with a
    // doubling step until the constraint holds as evaluated.
    if (out.slack > 0.0) {
        double free_norm = 0.0;
        for (int i = 0; i < m; ++i)
            if (out.u[i] > box.lower[i] && out.u[i] < box.upper[i]) free_norm += a[i] * a[i];
        double nudge = std::max(free_norm > 0.0 ? out.slack / free_norm : 0.0,
                                4.0 * std::numeric_limits<double>::epsilon() * std::abs(lambda)) +
                       std::numeric_limits<double>::denorm_min();
        for (int iter = 0; iter < 64 && out.slack > 0.0; ++iter, nudge *= 2.0) {
            lambda += nudge;
            out.u = clip_path(a, u_nom, box, lambda);
            out.slack = a.dot(out.u) + b;
        }
        if (out.slack > 0.0) {
            out.u = floor_point;
            out.slack = floor_slack;
        }
    }
    out.status = FilterStatus::constraint_active;
    return out;
}

FilterDecision cbf_qp(const SystemModel& system, double value, const ConstVecRef& gradient, const ConstVecRef& x,
                      const ConstVecRef& u_nom, AlphaFn alpha, ConstraintMode mode) {
    require(gradient.size() == system.state_dim() && gradient.allFinite(), "CBF gradient must be finite");
    require(std::isfinite(value), "CBF value must be finite");
    require(u_nom.size() == system.control_dim() && u_nom.allFinite(), "nominal control must be finite");
    require(alpha.coefficient > 0.0, "alpha must be strictly increasing");
    const Box& dbox = system.disturbance_box();
    const int n = system.state_dim(), m = system.control_dim();

    std::vector<VectorXd> candidates;
    if (mode == ConstraintMode::nominal_d) {
        candidates.push_back(dbox.midpoint());
    } else {
        for (unsigned v = 0; v < dbox.vertex_count(); ++v) candidates.push_back(dbox.vertex(v));
    }

    const Box& ubox = system.control_box();
    const VectorXd u0 = ubox.clip(u_nom);
    VectorXd f(n);
    MatrixXd g(n, m);
    std::vector<VectorXd> as;
    std::vector<double> bs, violation;
    for (const VectorXd& d : candidates) {
        system.drift(x, d, f);
        system.input_map(x, d, g);
        as.push_back(g.transpose() * gradient);
        bs.push_back(gradient.dot(f) + alpha(value));
        violation.push_back(as.back().dot(u0) + bs.back());
    }
    std::vector<int> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return violation[l] > violation[r]; });

    const int first = order[0];
    if (candidates.size() == 1 || violation[first] <= 0.0) return project_halfspace_box(as[first], bs[first], u_nom, ubox);

    // Violations at u0 can tie while the vertex constraints differ; prefer the
    // vertex whose projection also satisfies every other vertex.
    auto worst_at = [&](const VectorXd& u) {
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < as.size(); ++i) worst = std::max(worst, as[i].dot(u) + bs[i]);
        return worst;
    };
    for (int idx : order) {
        FilterDecision candidate = project_halfspace_box(as[idx], bs[idx], u_nom, ubox);
        if (candidate.status == FilterStatus::infeasible_fallback) break;
        if (worst_at(candidate.u) <= 0.0) return candidate;
    }
    return project_halfspace_box(as[first], bs[first], u_nom, ubox);
}

namespace {

struct LinearConstraint {
    VectorXd a;
    double b;
};

std::vector<LinearConstraint> hocbf_constraints(const SystemModel& system, const ConstVecRef& x, double alpha1,
                                                double alpha2) {
    require(system.name() == "double_integrator", "HOCBF baseline is defined for the double integrator only");
    require(alpha1 > 0.0 && alpha2 > 0.0, "HOCBF alphas must be positive");
    const VectorXd d = system.disturbance_box().midpoint();
    VectorXd f(2);
    MatrixXd g(2, system.control_dim());
    system.drift(x, d, f);
    system.input_map(x, d, g);
    std::vector<LinearConstraint> out;
    for (const auto& face : system.state_constraint().faces()) {
        const double s = face.sign * face.scale;
        const double h = face.scale * (face.sign * x[0] - face.bound);
        const double psi1 = s * x[1] + alpha1 * h;
        // psi1dot = s vdot + alpha1 s v, vdot = f_v + g_v u.
        out.push_back({s * g.row(1).transpose(), s * f[1] + alpha1 * s * x[1] + alpha2 * psi1});
    }
    return out;
}

}  // namespace

FilterDecision hocbf_di(const SystemModel& system, const ConstVecRef& x, const ConstVecRef& u_nom, double alpha1,
                        double alpha2) {
    const auto constraints = hocbf_constraints(system, x, alpha1, alpha2);
    const Box& box = system.control_box();
    const VectorXd u0 = box.clip(u_nom);

    std::vector<double> violation;
    for (const auto& c : constraints) violation.push_back(c.a.dot(u0) + c.b);
    std::vector<int> order(constraints.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return violation[l] > violation[r]; });

    if (violation[order[0]] <= 0.0) {
        return FilterDecision{u0, FilterStatus::nominal_pass, violation[order[0]]};
    }

    auto worst_at = [&](const VectorXd& u) {
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& c : constraints) worst = std::max(worst, c.a.dot(u) + c.b);
        return worst;
    };

    FilterDecision first;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const auto& c = constraints[order[rank]];
        FilterDecision candidate = project_halfspace_box(c.a, c.b, u_nom, box);
        if (rank == 0) first = candidate;
        if (candidate.status == FilterStatus::infeasible_fallback) continue;
        const double worst = worst_at(candidate.u);
        if (worst <= 1e-12) {
            candidate.slack = worst;
            return candidate;
        }
    }
    first.status = FilterStatus::infeasible_fallback;
    first.slack = worst_at(first.u);
    return first;
}

double hocbf_di_barrier(const SystemModel& system, const ConstVecRef& x, double alpha1) {
    double out = -std::numeric_limits<double>::infinity();
    for (const auto& face : system.state_constraint().faces()) {
        const double h = face.scale * (face.sign * x[0] - face.bound);
        const double psi1 = face.sign * face.scale * x[1] + alpha1 * h;
        out = std::max({out, h, psi1});
    }
    return out;
}

FilteredStep step_filtered(const SystemModel& system, const Policy& nominal, const ValueConfig& config, AlphaFn alpha,
                           ConstraintMode mode, const ConstVecRef& x, double dt_control) {
    require(dt_control > 0.0, "control period must be positive");
    FilteredStep out;
    out.estimate = evaluate(system, config, x);
    const VectorXd u_nom = nominal.act(x);
    out.decision = cbf_qp(system, out.estimate.value, out.estimate.gradient, x, u_nom, alpha, mode);
    out.u = out.decision.u;
    return out;
}

}  // namespace rpcbf
