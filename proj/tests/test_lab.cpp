#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "rpcbf/error.hpp"
#include "rpcbf/experiment.hpp"
#include "rpcbf/lab.hpp"

using namespace rpcbf;
using namespace rpcbf::lab;

namespace {

PolicyPtr di_brake(const SystemModel& di) {
    MatrixXd k(1, 2);
    k << 0.0, 10.0;
    return make_policy(di, PolicyKind::saturating_linear, k);
}

ValueConfig di_value(const SystemModel& di, double horizon, int samples) {
    ValueConfig cfg;
    cfg.horizon = horizon;
    cfg.dt = 0.1;
    cfg.num_samples = samples;
    cfg.policy = di_brake(di);
    cfg.seed = 4;
    return cfg;
}

SweepSpec di_grid(int count, double lo = -1.5, double hi = 1.5) {
    SweepSpec spec;
    spec.base_state = VectorXd::Zero(2);
    spec.axes[0] = GridAxis{0, lo, hi, count};
    spec.axes[1] = GridAxis{1, lo, hi, count};
    return spec;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("rpcbf_lab_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(257, 0);
    parallel_for(257, 4, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);
    std::atomic<int> ran{0};
    CHECK_THROWS_AS(parallel_for(50, 3,
                                 [&](int i) {
                                     ++ran;
                                     if (i == 7) throw Error(ErrorCode::io, "boom");
                                 }),
                    Error);
    parallel_for(0, 2, [](int) { FAIL("no work expected"); });
}

TEST_CASE("sweep spec validation") {
    const auto di = make_double_integrator(1.0, 1.0, 1.0);
    SweepSpec spec = di_grid(5);
    CHECK_NOTHROW(spec.validate(*di));
    spec.axes[1].dim = 0;
    CHECK_THROWS_AS(spec.validate(*di), Error);
    spec = di_grid(5);
    spec.axes[0].count = 1;
    CHECK_THROWS_AS(spec.validate(*di), Error);
    spec = di_grid(5);
    spec.base_state = VectorXd::Zero(3);
    CHECK_THROWS_AS(spec.validate(*di), Error);
}

TEST_CASE("filter boundary: avoid-set cells are outside") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    const SweepSpec spec = di_grid(13);
    FilterSettings filter;
    const BoundaryGrid grid = sweep_filter_boundary(*di, spec, di_value(*di, 3.0, 8), filter, 2);
    CHECK(grid.errors.empty());
    for (int i = 0; i < 13; ++i)
        for (int j = 0; j < 13; ++j)
            if (std::abs(spec.axes[0].at(i)) > 1.0) CHECK(grid.values(i, j) > 0.0);
}

TEST_CASE("filter boundary follows the braking envelope") {
    const auto di = make_double_integrator(1.0, 1.0, 1.0);
    const int count = 121;
    SweepSpec spec = di_grid(count);
    FilterSettings filter;
    filter.method = Method::pcbf;
    const BoundaryGrid grid = sweep_filter_boundary(*di, spec, di_value(*di, 5.0, 1), filter, 1);
    const double cell = spec.axes[0].at(1) - spec.axes[0].at(0);
    int compared = 0;
    for (int j = 0; j < count; ++j) {
        const double v = spec.axes[1].at(j);
        if (v <= 0.0) continue;
        // The envelope is where the upper face is reached under full braking.
        for (int i = 0; i < count; ++i) {
            const double p = spec.axes[0].at(i);
            if (p < -1.0) continue;
            const double envelope = 1.0 - 0.5 * v * v;
            const bool inside = grid.values(i, j) <= 0.0;
            if (inside != (p <= envelope)) CHECK(std::abs(p - envelope) <= 2 * cell);
            ++compared;
        }
    }
    CHECK(compared > 1000);
}

TEST_CASE("sweeps do not depend on the thread count") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    const SweepSpec spec = di_grid(9);
    FilterSettings filter;
    const ValueConfig value = di_value(*di, 3.0, 6);
    const BoundaryGrid serial = sweep_filter_boundary(*di, spec, value, filter, 1);
    const BoundaryGrid pooled = sweep_filter_boundary(*di, spec, value, filter, 3);
    CHECK(serial.values == pooled.values);

    SweepSpec short_eval = spec;
    short_eval.eval_horizon = 2.0;
    short_eval.eval_samples = 3;
    const auto zero = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    const SafeRegionGrid a = sweep_safe_region(*di, short_eval, value, filter, *zero, PlantSettings{}, 1);
    const SafeRegionGrid b = sweep_safe_region(*di, short_eval, value, filter, *zero, PlantSettings{}, 3);
    CHECK(a.safe == b.safe);
    CHECK(a.values == b.values);
}

TEST_CASE("safe region excludes the avoid set") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    SweepSpec spec = di_grid(7);
    spec.eval_horizon = 3.0;
    spec.eval_samples = 4;
    FilterSettings filter;
    const auto zero = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    const SafeRegionGrid grid = sweep_safe_region(*di, spec, di_value(*di, 3.0, 8), filter, *zero, PlantSettings{}, 0);
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
            CHECK(grid.safe(i, j) != -1);
            if (di->constraint(spec.state(i, j)) > 0.0) CHECK(grid.safe(i, j) == 0);
        }
    }
}

TEST_CASE("open-loop zero control from rest stays put") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    const auto zero = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    FilterSettings filter;
    filter.method = Method::none;
    const auto plant = plant_disturbances(*di, 50, 1, 0.5, 1)[0];
    const TrajectoryRecord rec = simulate(*di, *zero, filter, di_value(*di, 3.0, 4), Eigen::Vector2d::Zero(), 5.0, plant);
    REQUIRE(rec.times.size() == 51);
    CHECK(rec.states.size() == rec.times.size());
    CHECK(rec.controls.size() == rec.times.size());
    CHECK(rec.h_values.size() == rec.times.size());
    for (const auto& x : rec.states) CHECK(x.isZero(0.0));
    CHECK(rec.safe);
    CHECK_FALSE(rec.diverged);
    CHECK(rec.times.back() == doctest::Approx(5.0));
}

TEST_CASE("rpcbf keeps an accelerating double integrator inside its bounds") {
    const auto di = make_double_integrator(0.8, 1.2, 1.0);
    const auto push = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Ones(1));
    // With a steep alpha the held control overshoots once the maximizer
    // settles on the first knot, where the value has relative degree two.
    FilterSettings filter;
    filter.alpha.coefficient = 1.0;
    filter.mode = ConstraintMode::worst_vertex;
    const ValueConfig value = di_value(*di, 5.0, 32);
    const auto plants = plant_disturbances(*di, 150, 25, 0.5, 99);
    for (const auto& plant : plants) {
        const TrajectoryRecord rec = simulate(*di, *push, filter, value, Eigen::Vector2d::Zero(), 15.0, plant);
        CHECK(rec.safe);
        double worst = -1e300;
        for (double h : rec.h_values) worst = std::max(worst, h);
        CHECK(worst <= 0.0);
    }
}

TEST_CASE("a short segway horizon admits an unsafe trajectory") {
    const auto seg = make_segway();
    MatrixXd k(1, 4);
    k << -0.0316, -77.75, -0.691, -12.68;
    const auto lqr = make_policy(*seg, PolicyKind::saturating_linear, k);
    const auto full = make_policy(*seg, PolicyKind::constant, MatrixXd(), seg->control_box().upper);
    FilterSettings filter;
    filter.method = Method::pcbf;
    const auto plant = constant_disturbance(seg->disturbance_box().midpoint(), 150);
    VectorXd x0(4);
    x0 << 0.3, 0.17, 0.0, 0.0;
    ValueConfig value;
    value.dt = 0.1;
    value.num_samples = 1;
    value.policy = lqr;
    value.horizon = 5.0;
    CHECK_FALSE(simulate(*seg, *full, filter, value, x0, 15.0, plant).safe);
    value.horizon = 20.0;
    CHECK(simulate(*seg, *full, filter, value, x0, 15.0, plant).safe);
}

TEST_CASE("hocbf ignores input bounds and leaves the safe set") {
    const auto di = make_double_integrator(1.0, 1.0, 1.0);
    const auto zero = make_policy(*di, PolicyKind::constant, MatrixXd(), VectorXd::Zero(1));
    FilterSettings filter;
    filter.method = Method::hocbf;
    const auto plant = plant_disturbances(*di, 40, 1, 0.5, 0)[0];
    const TrajectoryRecord rec =
        simulate(*di, *zero, filter, di_value(*di, 3.0, 1), Eigen::Vector2d(0.99, 1.5), 4.0, plant);
    CHECK_FALSE(rec.safe);
}

TEST_CASE("gradient study rows") {
    GradStudySpec spec;
    spec.dt_list = {0.1};
    spec.v0_count = 16;
    spec.v0_lo = 0.5;
    spec.v0_hi = 2.0;
    const auto rows = gradient_error_study(spec);
    REQUIRE(rows.size() == 16);
    for (const auto& r : rows) {
        CHECK(r.analytic == r.v0);
        CHECK(std::abs(r.spline_gradient - r.v0) <= 1e-3);
        CHECK(std::abs(r.spline_value - 0.5 * r.v0 * r.v0) <= 1e-9);
        CHECK(r.naive_value <= r.spline_value + 1e-12);
    }
    CHECK(rows[4].v0 == doctest::Approx(0.9));
    spec.dt_list.clear();
    CHECK_THROWS_AS(gradient_error_study(spec), Error);
}

TEST_CASE("csv round trip is exact") {
    CsvTable table;
    table.header = {"a", "b", "c"};
    table.rows = {{0.1, -1e-300, 1.0 / 3.0},
                  {std::numeric_limits<double>::quiet_NaN(), 123456789.123456789, -0.0},
                  {std::numeric_limits<double>::infinity(), 5e-324, 1.7976931348623157e308}};
    const auto dir = scratch("csv");
    std::filesystem::create_directories(dir);
    const auto path = (dir / "t.csv").string();
    write_csv(path, table);
    const CsvTable back = read_csv(path);
    CHECK(back.header == table.header);
    REQUIRE(back.rows.size() == table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double want = table.rows[r][c], got = back.rows[r][c];
            if (std::isnan(want)) CHECK(std::isnan(got));
            else CHECK(std::memcmp(&want, &got, sizeof(double)) == 0);
        }
    }
    CHECK_THROWS_AS(read_csv((dir / "missing.csv").string()), Error);
}

TEST_CASE("config parsing") {
    using nlohmann::json;
    const ExperimentConfig defaults = parse_config(json::object());
    CHECK(defaults.system->name() == "double_integrator");
    CHECK(defaults.filter.method == Method::rpcbf);
    CHECK(defaults.filter.control_dt == defaults.value.dt);
    CHECK_FALSE(defaults.sweep.has_value());

    const json doc = json::parse(R"({
        "seed": 12,
        "system": {"name": "segway", "body_mass": [17, 23]},
        "value": {"T": 6.4, "dt": 0.1, "N": 10},
        "filter": {"method": "pcbf", "alpha": 2.5, "mode": "worst_vertex",
                   "nominal_policy": {"kind": "constant", "constant": [30]}},
        "experiment": {"grid": [[-3, 3, 11], [-1.2, 1.2, 9], 0, 0], "T_bar": 5, "N_bar": 3}
    })");
    const ExperimentConfig cfg = parse_config(doc);
    CHECK(cfg.seed == 12);
    CHECK(cfg.value.seed == 12);
    CHECK(cfg.system->name() == "segway");
    CHECK(cfg.system->disturbance_box().lower[0] == 17.0);
    CHECK(cfg.value.horizon_steps() == 64);
    CHECK(cfg.filter.method == Method::pcbf);
    CHECK(cfg.filter.mode == ConstraintMode::worst_vertex);
    CHECK(cfg.nominal->act(VectorXd::Zero(4))[0] == 30.0);
    REQUIRE(cfg.sweep.has_value());
    CHECK(cfg.sweep->axes[1].dim == 1);
    CHECK(cfg.sweep->axes[1].count == 9);
    CHECK(cfg.sweep->eval_samples == 3);
    CHECK(cfg.resolved["system"]["body_mass"][1] == 23.0);

    // Re-parsing the resolved document is a fixed point.
    CHECK(parse_config(cfg.resolved).resolved == cfg.resolved);

    auto rejects = [](const char* text) {
        try {
            parse_config(json::parse(text));
        } catch (const Error& e) {
            return e.code() == ErrorCode::config;
        }
        return false;
    };
    CHECK(rejects(R"({"sistem": {}})"));
    CHECK(rejects(R"({"value": {"T": 5, "horizon": 5}})"));
    CHECK(rejects(R"({"system": {"name": "rocket"}})"));
    CHECK(rejects(R"({"system": {"mass": [0, 1]}})"));
    CHECK(rejects(R"({"value": {"T": 0.35}})"));
    CHECK(rejects(R"({"value": {"N": "many"}})"));
    CHECK(rejects(R"({"filter": {"mode": "sideways"}})"));
    CHECK(rejects(R"({"filter": {"alpha": -1}})"));
    CHECK(rejects(R"({"experiment": {"grid": [[-1, 1, 5], 0]}})"));
    CHECK(rejects(R"({"experiment": {"grid": [[-1, 1, 5], [-1, 1, 1]]}})"));
    CHECK(rejects(R"({"system": {"name": "segway"}, "filter": {"method": "hocbf"}})"));
    CHECK(rejects(R"({"policy": {"kind": "saturating_linear", "gains": [1, 2, 3]}})"));
    CHECK(rejects(R"({"seed": -3})"));
}

TEST_CASE("runners write artifacts deterministically") {
    using nlohmann::json;
    ExperimentConfig cfg = parse_config(json::parse(R"({
        "value": {"T": 2, "N": 8},
        "experiment": {"grid": [[-1.5, 1.5, 6], [-1.5, 1.5, 5]], "T_bar": 2, "N_bar": 2,
                       "x0": [[0, 0], [0.5, 0.5]], "duration": 1,
                       "grad_study": {"dt_list": [0.1], "v0": [0.5, 2, 4]}}
    })"));
    set_seed(cfg, 77);
    const auto a = scratch("run_a"), b = scratch("run_b");
    for (const auto& dir : {a, b}) {
        CHECK(run_sweep_boundary(cfg, dir.string()) == 0);
        CHECK(run_sweep_safe_region(cfg, dir.string()) == 0);
        CHECK(run_simulate(cfg, dir.string()) == 0);
        CHECK(run_grad_study(cfg, dir.string()) == 0);
        CHECK(run_value(cfg, Eigen::Vector2d(0.2, 0.3), dir.string()) == 0);
    }
    for (const char* file : {"boundary.csv", "safe_region.csv", "traj_0.csv", "traj_1.csv", "grad_study.csv",
                             "value.csv", "run.json"}) {
        CAPTURE(file);
        REQUIRE(std::filesystem::exists(a / file));
        CHECK(slurp(a / file) == slurp(b / file));
    }
    const CsvTable boundary = read_csv((a / "boundary.csv").string());
    CHECK(boundary.rows.size() == 30);
    CHECK(boundary.header[2] == "p");
    CHECK(boundary.header[3] == "v");
    const json manifest = json::parse(slurp(a / "run.json"));
    CHECK(manifest["seed"] == 77);
    CHECK(manifest["command"] == "value");
    CHECK(manifest["config"]["seed"] == 77);
    CHECK(manifest.contains("version"));

    ExperimentConfig gridless = parse_config(json::object());
    CHECK_THROWS_AS(run_sweep_boundary(gridless, a.string()), Error);
    CHECK_THROWS_AS(run_value(gridless, VectorXd::Zero(3), a.string()), Error);
}
