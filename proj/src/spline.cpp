#include "rpcbf/spline.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "rpcbf/error.hpp"

namespace rpcbf {

namespace {

// Reduced not-a-knot system on the interior moments M_1 .. M_{n-1} (n = H-1
// segments). Eliminating M_0 = 2 M_1 - M_2 and M_n = 2 M_{n-1} - M_{n-2}
// turns the first and last rows into 6 M = rhs.
struct Tridiagonal {
    int size = 0;
    double sub(int row) const { return row == size - 1 ? 0.0 : 1.0; }
    double super(int row) const { return row == 0 ? 0.0 : 1.0; }
    double diag(int row) const { return (row == 0 || row == size - 1) ? 6.0 : 4.0; }
};

// Thomas algorithm; `transpose` solves with the transposed matrix.
void solve_tridiagonal(const Tridiagonal& a, bool transpose, std::vector<double>& rhs, std::vector<double>& scratch) {
    const int r = a.size;
    scratch.resize(r);
    auto lower = [&](int row) { return transpose ? a.super(row - 1) : a.sub(row); };  // entry (row, row-1)
    auto upper = [&](int row) { return transpose ? a.sub(row + 1) : a.super(row); };  // entry (row, row+1)
    double denom = a.diag(0);
    scratch[0] = r > 1 ? upper(0) / denom : 0.0;
    rhs[0] /= denom;
    for (int i = 1; i < r; ++i) {
        denom = a.diag(i) - lower(i) * scratch[i - 1];
        scratch[i] = i + 1 < r ? upper(i) / denom : 0.0;
        rhs[i] = (rhs[i] - lower(i) * rhs[i - 1]) / denom;
    }
    for (int i = r - 2; i >= 0; --i) rhs[i] -= scratch[i] * rhs[i + 1];
}

// Second derivatives at the knots.
void moments(const ConstVecRef& y, double h, std::vector<double>& m, std::vector<double>& scratch) {
    const int knots = static_cast<int>(y.size());
    const int n = knots - 1;
    m.assign(knots, 0.0);
    if (knots == 2) return;
    const double inv_h2 = 1.0 / (h * h);
    if (knots == 3) {
        const double c = (y[0] - 2.0 * y[1] + y[2]) * inv_h2;
        m[0] = m[1] = m[2] = c;
        return;
    }
    // Solve in place on m[1 .. n-1].
    std::vector<double> reduced(n - 1);
    for (int i = 1; i < n; ++i) reduced[i - 1] = 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1]) * inv_h2;
    solve_tridiagonal(Tridiagonal{n - 1}, false, reduced, scratch);
    for (int i = 1; i < n; ++i) m[i] = reduced[i - 1];
    m[0] = 2.0 * m[1] - m[2];
    m[n] = 2.0 * m[n - 1] - m[n - 2];
}

double segment_value(double y0, double y1, double m0, double m1, double h, double s) {
    const double t = 1.0 - s;
    return t * y0 + s * y1 + (h * h / 6.0) * ((t * t * t - t) * m0 + (s * s * s - s) * m1);
}

// Roots of dS/ds inside the open unit interval, ascending.
int derivative_roots(double y0, double y1, double m0, double m1, double h, std::array<double, 2>& roots) {
    const double qa = 0.5 * h * h * (m1 - m0);
    const double qb = h * h * m0;
    const double qc = (y1 - y0) - (h * h / 6.0) * (2.0 * m0 + m1);
    int count = 0;
    auto keep = [&](double s) {
        if (s > 0.0 && s < 1.0 && std::isfinite(s)) roots[count++] = s;
    };
    const double scale = std::abs(qb) + std::abs(qc);
    if (std::abs(qa) <= 1e-14 * scale || qa == 0.0) {
        if (qb != 0.0) keep(-qc / qb);
    } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc < 0.0) return 0;
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (qb + std::copysign(sq, qb));
        keep(q / qa);
        if (q != 0.0) keep(qc / q);
    }
    if (count == 2 && roots[0] > roots[1]) std::swap(roots[0], roots[1]);
    return count;
}

struct Located {
    double value;
    int segment;
    double s;
    int knot;
};

Located locate_max(const ConstVecRef& y, double h, const std::vector<double>& m) {
    const int n = static_cast<int>(y.size()) - 1;
    Located best{y[0], 0, 0.0, 0};
    std::array<double, 2> roots{};
    for (int j = 0; j < n; ++j) {
        const int count = derivative_roots(y[j], y[j + 1], m[j], m[j + 1], h, roots);
        for (int r = 0; r < count; ++r) {
            const double v = segment_value(y[j], y[j + 1], m[j], m[j + 1], h, roots[r]);
            if (v > best.value) best = {v, j, roots[r], -1};
        }
        if (y[j + 1] > best.value) best = {y[j + 1], j, 1.0, j + 1};
    }
    if (best.knot == n) best.segment = n - 1;
    return best;
}

void check_input(const ConstVecRef& y, double dt) {
    require(y.size() >= 2, "spline maximum needs at least two samples");
    require(dt > 0.0, "spline time step must be positive");
    require(y.allFinite(), "spline samples must be finite");
}

}  // namespace

SplineMax spline_max(const ConstVecRef& y, double dt) {
    check_input(y, dt);
    std::vector<double> m, scratch;
    moments(y, dt, m, scratch);
    const Located at = locate_max(y, dt, m);

    const int knots = static_cast<int>(y.size());
    const int n = knots - 1;
    SplineMax out;
    out.value = at.value;
    out.weights = VectorXd::Zero(knots);
    if (at.knot >= 0) {
        out.knot = at.knot;
        out.segment = at.segment;
        out.time = at.knot * dt;
        out.weights[at.knot] = 1.0;
        return out;
    }
    const int j = at.segment;
    const double s = at.s, t = 1.0 - s, h = dt;
    out.segment = j;
    out.time = (j + s) * dt;
    out.weights[j] += t;
    out.weights[j + 1] += s;

    // Adjoint of the moment solve: d(g . M)/dy = (6 / h^2) D^T A^{-T} E^T g.
    std::vector<double> g(knots, 0.0);
    g[j] = (h * h / 6.0) * (t * t * t - t);
    g[j + 1] = (h * h / 6.0) * (s * s * s - s);
    const double inv_h2 = 1.0 / (h * h);
    if (knots == 3) {
        const double total = (g[0] + g[1] + g[2]) * inv_h2;
        out.weights[0] += total;
        out.weights[1] -= 2.0 * total;
        out.weights[2] += total;
        return out;
    }
    if (knots == 2) return out;

    std::vector<double> lambda(n - 1);
    for (int i = 1; i < n; ++i) lambda[i - 1] = g[i];
    lambda[0] += 2.0 * g[0];
    lambda[1] -= g[0];
    lambda[n - 2] += 2.0 * g[n];
    lambda[n - 3] -= g[n];
    solve_tridiagonal(Tridiagonal{n - 1}, true, lambda, scratch);
    for (int i = 1; i < n; ++i) {
        const double c = 6.0 * inv_h2 * lambda[i - 1];
        out.weights[i - 1] += c;
        out.weights[i] -= 2.0 * c;
        out.weights[i + 1] += c;
    }
    return out;
}

double spline_max_value(const ConstVecRef& y, double dt) {
    check_input(y, dt);
    thread_local std::vector<double> m, scratch;
    moments(y, dt, m, scratch);
    return locate_max(y, dt, m).value;
}

double spline_eval(const ConstVecRef& y, double dt, double t) {
    check_input(y, dt);
    std::vector<double> m, scratch;
    moments(y, dt, m, scratch);
    const int n = static_cast<int>(y.size()) - 1;
    int j = static_cast<int>(std::floor(t / dt));
    if (j < 0) j = 0;
    if (j > n - 1) j = n - 1;
    const double s = t / dt - j;
    return segment_value(y[j], y[j + 1], m[j], m[j + 1], dt, s);
}

DiscreteMax naive_max(const ConstVecRef& y) {
    require(y.size() >= 1, "discrete maximum needs at least one sample");
    DiscreteMax out{y[0], 0};
    for (int k = 1; k < y.size(); ++k)
        if (y[k] > out.value) out = {y[k], k};
    return out;
}

}  // namespace rpcbf
