#include <doctest.h>

#include <cmath>
#include <random>

#include "rpcbf/error.hpp"
#include "rpcbf/rollout.hpp"
#include "support.hpp"

using namespace rpcbf;

namespace {

// f = 0, g = 0.
class Frozen final : public SystemModel {
public:
    Frozen()
        : SystemModel(3, Box{VectorXd::Constant(1, -1), VectorXd::Constant(1, 1)},
                      Box{VectorXd::Zero(1), VectorXd::Ones(1)}, StateConstraint({{0, 1.0, 1.0, 1.0}})) {}
    std::string name() const override { return "frozen"; }
    void drift(const ConstVecRef&, const ConstVecRef&, VecRef out) const override { out.setZero(); }
    void input_map(const ConstVecRef&, const ConstVecRef&, MatRef out) const override { out.setZero(); }
    void drift_jacobian(const ConstVecRef&, const ConstVecRef&, MatRef out) const override { out.setZero(); }
    void input_map_jacobian(const ConstVecRef&, const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
        out.setZero();
    }
};

// xdot = x^2 blows up in finite time.
class Blowup final : public SystemModel {
public:
    Blowup()
        : SystemModel(1, Box{VectorXd::Zero(1), VectorXd::Zero(1)}, Box{VectorXd::Zero(1), VectorXd::Zero(1)},
                      StateConstraint({{0, 1.0, 1e300, 1.0}})) {}
    std::string name() const override { return "blowup"; }
    void drift(const ConstVecRef& x, const ConstVecRef&, VecRef out) const override { out[0] = x[0] * x[0]; }
    void input_map(const ConstVecRef&, const ConstVecRef&, MatRef out) const override { out.setZero(); }
    void drift_jacobian(const ConstVecRef& x, const ConstVecRef&, MatRef out) const override { out(0, 0) = 2 * x[0]; }
    void input_map_jacobian(const ConstVecRef&, const ConstVecRef&, const ConstVecRef&, MatRef out) const override {
        out.setZero();
    }
};

MatrixXd lqr_gains() {
    MatrixXd k(1, 4);
    k << -0.0316, -77.75, -0.691, -12.68;
    return k;
}

// Final state as a function of x0, by central differences.
MatrixXd fd_final_jacobian(const SystemModel& sys, const Policy& pi, const VectorXd& x0,
                           const DisturbanceTrajectory& dist, double dt, int steps, double eps) {
    MatrixXd out(x0.size(), x0.size());
    for (int j = 0; j < x0.size(); ++j) {
        VectorXd xp = x0, xm = x0;
        xp[j] += eps;
        xm[j] -= eps;
        const auto rp = rollout(sys, pi, xp, dist, dt, steps, false);
        const auto rm = rollout(sys, pi, xm, dist, dt, steps, false);
        out.col(j) = (rp.states.col(steps - 1) - rm.states.col(steps - 1)) / (2 * eps);
    }
    return out;
}

}  // namespace

TEST_CASE("derive_seed is deterministic and separates streams") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("disturbance sampler anchoring and box membership") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    const auto samples = sample_disturbances(*di, 40, 12, 0.5, 7);
    REQUIRE(samples.size() == 12);
    for (const auto& s : samples) {
        CHECK(s.steps() == 40);
        for (int k = 0; k < s.steps(); ++k) CHECK(di->disturbance_box().contains(s.at(k)));
    }
    CHECK((samples[0].values.array() == 0.8).all());
    CHECK((samples[1].values.array() == 1.2).all());

    const auto single = sample_disturbances(*di, 10, 1, 0.5, 7);
    REQUIRE(single.size() == 1);
    CHECK((single[0].values.array() == 0.8).all());

    const auto degenerate = make_double_integrator(1.0, 1.0, 1.0);
    for (const auto& s : sample_disturbances(*degenerate, 25, 6, 0.3, 1)) CHECK((s.values.array() == 1.0).all());
}

TEST_CASE("disturbance sampler is deterministic and prefix-stable") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    const auto a = sample_disturbances(*di, 30, 5, 0.5, 99);
    const auto b = sample_disturbances(*di, 50, 8, 0.5, 99);
    const auto c = sample_disturbances(*di, 30, 5, 0.5, 100);
    bool differs = false;
    for (int i = 0; i < 5; ++i) {
        CHECK(a[i].values == b[i].values.leftCols(30));
        differs = differs || a[i].values != c[i].values;
    }
    CHECK(differs);
}

TEST_CASE("vertex fraction matches the mixture weight") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    // Anchored samples 0 and 1 are excluded from the count.
    const auto samples = sample_disturbances(*di, 1000, 102, 0.5, 2024);
    long vertices = 0, total = 0;
    for (std::size_t i = 2; i < samples.size(); ++i) {
        for (int k = 0; k < samples[i].steps(); ++k) {
            const double d = samples[i].at(k)[0];
            vertices += (d == 0.8 || d == 1.2);
            ++total;
        }
    }
    CHECK(total == 100000);
    CHECK(std::abs(static_cast<double>(vertices) / total - 0.5) <= 0.01);

    for (const auto& s : sample_disturbances(*di, 200, 6, 1.0, 3))
        for (int k = 0; k < s.steps(); ++k) CHECK((s.at(k)[0] == 0.8 || s.at(k)[0] == 1.2));
}

TEST_CASE("RK4 integrates the braking double integrator exactly") {
    const auto di = make_double_integrator(1.0, 1.0, 1.0);
    const auto brake = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Constant(1, -1.0));
    const auto r = rollout(*di, *brake, Eigen::Vector2d(0, 1), constant_disturbance(VectorXd::Ones(1), 21), 0.1, 21,
                           true);
    REQUIRE(r.steps() == 21);
    REQUIRE(r.sensitivities.size() == 21);
    for (int k = 0; k < 21; ++k) {
        CHECK(r.states(0, k) == doctest::Approx(0.1 * k - 0.005 * k * k).epsilon(1e-12));
        CHECK(r.h_values[k] == doctest::Approx(r.states(0, k) - 1.0).epsilon(1e-12));
    }
    CHECK(r.sensitivities[0] == MatrixXd::Identity(2, 2));
}

TEST_CASE("zero dynamics leave the state and sensitivities unchanged") {
    const Frozen sys;
    const auto zero = make_policy(sys, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    const VectorXd x0 = Eigen::Vector3d(0.3, -2.0, 7.0);
    const auto r = rollout(sys, *zero, x0, constant_disturbance(VectorXd::Zero(1), 12), 0.25, 12, true);
    for (int k = 0; k < 12; ++k) {
        CHECK(r.states.col(k) == x0);
        CHECK(r.sensitivities[static_cast<std::size_t>(k)] == MatrixXd::Identity(3, 3));
    }
}

TEST_CASE("blow-up is reported with the step index") {
    const Blowup sys;
    const auto zero = make_policy(sys, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    try {
        rollout(sys, *zero, VectorXd::Constant(1, 1e100), constant_disturbance(VectorXd::Zero(1), 50), 1.0, 50, false);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::diverged);
        REQUIRE(e.step.has_value());
        CHECK(*e.step >= 1);
        CHECK(*e.step < 50);
    }
}

TEST_CASE("rollout preconditions") {
    const auto di = make_double_integrator(1.0, 1.0, 1.0);
    const auto zero = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    const auto dist = constant_disturbance(VectorXd::Ones(1), 5);
    CHECK_THROWS_AS(rollout(*di, *zero, Eigen::Vector2d(0, 0), dist, 0.0, 5, false), Error);
    CHECK_THROWS_AS(rollout(*di, *zero, Eigen::Vector2d(0, 0), dist, 0.1, 7, false), Error);
    CHECK_THROWS_AS(rollout(*di, *zero, VectorXd::Zero(3), dist, 0.1, 5, false), Error);
}

TEST_CASE("segway sensitivities match finite differences") {
    const auto seg = make_segway();
    const auto lqr = make_policy(*seg, PolicyKind::saturating_linear, lqr_gains());
    VectorXd x0(4);
    x0 << 0.1, 0.1, 0.0, 0.0;
    const int steps = 30;
    const auto samples = sample_disturbances(*seg, steps, 3, 0.5, 17);
    for (const auto& dist : samples) {
        const auto r = rollout(*seg, *lqr, x0, dist, 0.1, steps, true);
        const MatrixXd fd = fd_final_jacobian(*seg, *lqr, x0, dist, 0.1, steps, 1e-6);
        CHECK(test::rel_err(r.sensitivities.back(), fd) <= 1e-5);
    }
}

TEST_CASE("double integrator sensitivities satisfy the directional check") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    MatrixXd k(1, 2);
    k << 1.0, 1.5;
    const auto pi = make_policy(*di, PolicyKind::saturating_linear, k);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto dist = sample_disturbances(*di, 40, 4, 0.5, 1)[3];
    const VectorXd x0 = Eigen::Vector2d(0.1, 0.2);
    const auto base = rollout(*di, *pi, x0, dist, 0.1, 40, true);
    for (int trial = 0; trial < 10; ++trial) {
        VectorXd delta = Eigen::Vector2d(normal(rng), normal(rng));
        delta *= 1e-5 / delta.norm();
        const auto moved = rollout(*di, *pi, x0 + delta, dist, 0.1, 40, false);
        for (int s = 0; s < 40; ++s) {
            const VectorXd lin = base.states.col(s) + base.sensitivities[static_cast<std::size_t>(s)] * delta;
            CHECK((moved.states.col(s) - lin).norm() <= 1e-6);
        }
    }
}

TEST_CASE("RK4 converges at fourth order on the segway") {
    const auto seg = make_segway();
    const auto zero = make_policy(*seg, PolicyKind::constant, MatrixXd(), VectorXd::Constant(1, 2.0));
    VectorXd x0(4);
    x0 << 0.0, 0.2, 0.1, -0.3;
    const VectorXd d = seg->disturbance_box().midpoint();
    const double duration = 1.0;
    auto terminal = [&](double dt) {
        const int steps = static_cast<int>(std::lround(duration / dt)) + 1;
        return VectorXd(rollout(*seg, *zero, x0, constant_disturbance(d, steps), dt, steps, false).states.col(steps - 1));
    };
    const double dt = 0.1;
    const VectorXd ref = terminal(dt / 64);
    const double e1 = (terminal(dt) - ref).norm();
    const double e2 = (terminal(dt / 2) - ref).norm();
    CHECK(std::log2(e1 / e2) >= 3.5);
}

TEST_CASE("rollouts are bit-reproducible and agree with the constraint trace") {
    const auto seg = make_segway();
    const auto lqr = make_policy(*seg, PolicyKind::saturating_linear, lqr_gains());
    VectorXd x0(4);
    x0 << -0.4, 0.25, 0.3, 0.1;
    const auto dist = sample_disturbances(*seg, 64, 5, 0.5, 4)[4];
    const auto a = rollout(*seg, *lqr, x0, dist, 0.1, 64, true);
    const auto b = rollout(*seg, *lqr, x0, dist, 0.1, 64, false);
    CHECK(a.states == b.states);
    Rk4Integrator integrator(*seg, lqr.get());
    VectorXd h(64);
    constraint_trace(*seg, integrator, x0, dist, 0.1, 64, h);
    CHECK(h == a.h_values);
}
