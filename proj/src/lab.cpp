#include "rpcbf/lab.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "rpcbf/error.hpp"

namespace rpcbf::lab {

ValueConfig value_config_for(Method method, const ValueConfig& base) {
    ValueConfig out = base;
    if (method == Method::pcbf) {
        out.undisturbed = true;
        out.num_samples = 1;
    }
    return out;
}

void SweepSpec::validate(const SystemModel& system) const {
    require(base_state.size() == system.state_dim(), "sweep base state has the wrong dimension");
    require(axes[0].dim != axes[1].dim, "sweep needs two distinct swept dimensions");
    for (const auto& axis : axes) {
        require(axis.dim >= 0 && axis.dim < system.state_dim(), "swept dimension out of range");
        require(axis.count >= 2, "each swept dimension needs at least two points");
        require(std::isfinite(axis.lo) && std::isfinite(axis.hi) && axis.lo < axis.hi, "sweep range must be lo < hi");
    }
    require(eval_horizon > 0.0, "evaluation horizon must be positive");
    require(eval_samples >= 1, "evaluation needs at least one plant realization");
}

VectorXd SweepSpec::state(int i, int j) const {
    VectorXd x = base_state;
    x[axes[0].dim] = axes[0].at(i);
    x[axes[1].dim] = axes[1].at(j);
    return x;
}

void parallel_for(int count, int threads, const std::function<void(int)>& task) {
    if (count <= 0) return;
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, count);
    if (threads == 1) {
        for (int i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (int i = next++; i < count && !failed; i = next++) {
            try {
                task(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

namespace {

double barrier_value(const SystemModel& system, const ValueConfig& value, const FilterSettings& filter,
                     const ConstVecRef& x) {
    switch (filter.method) {
    case Method::hocbf:
        return hocbf_di_barrier(system, x, filter.hocbf_alpha1);
    case Method::pcbf:
    case Method::rpcbf:
        return evaluate(system, value_config_for(filter.method, value), x).value;
    case Method::none:
        break;
    }
    throw Error(ErrorCode::invalid_argument, "sweeps need a filter method (pcbf, rpcbf or hocbf)");
}

std::string cell_error(int i, int j, const std::exception& e) {
    return "cell (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what();
}

// Per-cell errors are collected in cell order regardless of scheduling.
void collect_errors(const std::vector<std::string>& per_cell, std::vector<std::string>& out) {
    for (const auto& e : per_cell)
        if (!e.empty()) out.push_back(e);
}

int control_steps(double duration, double control_dt) {
    require(control_dt > 0.0, "control period must be positive");
    require(duration > 0.0, "simulation duration must be positive");
    return std::max(1, static_cast<int>(std::lround(duration / control_dt)));
}

}  // namespace

BoundaryGrid sweep_filter_boundary(const SystemModel& system, const SweepSpec& spec, const ValueConfig& value,
                                   const FilterSettings& filter, int threads) {
    spec.validate(system);
    const int rows = spec.axes[0].count, cols = spec.axes[1].count;
    BoundaryGrid out;
    out.values = MatrixXd::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errors(spec.cells());
    parallel_for(spec.cells(), threads, [&](int c) {
        const int i = c / cols, j = c % cols;
        try {
            out.values(i, j) = barrier_value(system, value, filter, spec.state(i, j));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::invalid_argument) throw;
            errors[c] = cell_error(i, j, e);
        }
    });
    collect_errors(errors, out.errors);
    return out;
}

std::vector<DisturbanceTrajectory> plant_disturbances(const SystemModel& system, int steps, int count,
                                                      double vertex_weight, std::uint64_t seed) {
    return sample_disturbances(system, steps, count, vertex_weight, derive_seed(seed, streams::plant, 0));
}

SafeRegionGrid sweep_safe_region(const SystemModel& system, const SweepSpec& spec, const ValueConfig& value,
                                 const FilterSettings& filter, const Policy& nominal, const PlantSettings& plant,
                                 int threads) {
    spec.validate(system);
    const int rows = spec.axes[0].count, cols = spec.axes[1].count;
    const int steps = control_steps(spec.eval_horizon, filter.control_dt);
    const auto realizations =
        plant_disturbances(system, steps, spec.eval_samples, plant.vertex_weight, plant.seed);

    SafeRegionGrid out;
    out.values = MatrixXd::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
    out.safe = Eigen::MatrixXi::Constant(rows, cols, -1);
    std::vector<std::string> errors(spec.cells());
    parallel_for(spec.cells(), threads, [&](int c) {
        const int i = c / cols, j = c % cols;
        const VectorXd x0 = spec.state(i, j);
        try {
            const double v = filter.method == Method::none ? system.constraint(x0)
                                                           : barrier_value(system, value, filter, x0);
            out.values(i, j) = v;
            if (system.constraint(x0) > 0.0) {
                out.safe(i, j) = 0;
                return;
            }
            if (plant.inside_only && !(v <= 0.0)) return;
            int safe = 1;
            for (const auto& realization : realizations) {
                if (!simulate(system, nominal, filter, value, x0, spec.eval_horizon, realization).safe) {
                    safe = 0;
                    break;
                }
            }
            out.safe(i, j) = safe;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::invalid_argument) throw;
            errors[c] = cell_error(i, j, e);
        }
    });
    collect_errors(errors, out.errors);
    return out;
}

TrajectoryRecord simulate(const SystemModel& system, const Policy& nominal, const FilterSettings& filter,
                          const ValueConfig& value, const ConstVecRef& x0, double duration,
                          const DisturbanceTrajectory& plant_disturbance) {
    const double dt = filter.control_dt;
    const int steps = control_steps(duration, dt);
    require(x0.size() == system.state_dim() && x0.allFinite(), "initial state must be finite and sized");
    require(plant_disturbance.steps() >= steps, "plant disturbance is shorter than the simulation");
    require(plant_disturbance.values.rows() == system.disturbance_dim(), "plant disturbance dimension mismatch");

    TrajectoryRecord rec;
    Rk4Integrator plant(system, nullptr);
    VectorXd x = x0, next(x0.size());
    const ValueConfig base = value_config_for(filter.method, value);
    for (int k = 0; k <= steps; ++k) {
        const VectorXd u_nom = nominal.act(x);
        VectorXd u;
        FilterStatus status = FilterStatus::nominal_pass;
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
            switch (filter.method) {
            case Method::none:
                u = system.control_box().clip(u_nom);
                break;
            case Method::hocbf: {
                const FilterDecision d = hocbf_di(system, x, u_nom, filter.hocbf_alpha1, filter.hocbf_alpha2);
                u = d.u;
                status = d.status;
                v = hocbf_di_barrier(system, x, filter.hocbf_alpha1);
                break;
            }
            case Method::pcbf:
            case Method::rpcbf: {
                ValueConfig cfg = base;
                cfg.seed = derive_seed(value.seed, streams::control_step, static_cast<std::uint64_t>(k));
                const FilteredStep s = step_filtered(system, nominal, cfg, filter.alpha, filter.mode, x, dt);
                u = s.u;
                status = s.decision.status;
                v = s.estimate.value;
                break;
            }
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::diverged) throw;
            rec.diverged = true;
            break;
        }
        rec.times.push_back(k * dt);
        rec.states.push_back(x);
        rec.nominal_controls.push_back(u_nom);
        rec.controls.push_back(u);
        rec.values.push_back(v);
        rec.statuses.push_back(status);
        rec.h_values.push_back(system.constraint(x));
        if (k == steps) break;

        plant.step_held(x, plant_disturbance.at(k), u, dt, next);
        if (!next.allFinite()) {
            rec.diverged = true;
            break;
        }
        x.swap(next);
    }
    rec.safe = !rec.diverged;
    for (double h : rec.h_values)
        if (!(h <= 0.0)) rec.safe = false;
    return rec;
}

std::vector<GradStudyRow> gradient_error_study(const GradStudySpec& spec) {
    require(!spec.dt_list.empty(), "gradient study needs at least one dt");
    require(spec.v0_count >= 2 && spec.v0_lo < spec.v0_hi, "gradient study needs a v0 range");
    require(spec.horizon > 0.0, "gradient study horizon must be positive");

    DoubleIntegratorParams params;
    params.position_bound = 0.0;
    params.two_sided = false;
    const SystemPtr system = make_double_integrator(params);
    const PolicyPtr brake = make_policy(*system, PolicyKind::constant, MatrixXd(), VectorXd::Constant(1, -1.0));

    std::vector<GradStudyRow> rows;
    for (double dt : spec.dt_list) {
        require(dt > 0.0, "gradient study dt must be positive");
        const long steps = std::lround(spec.horizon / dt);
        ValueConfig spline_cfg;
        spline_cfg.horizon = static_cast<double>(steps) * dt;
        spline_cfg.dt = dt;
        spline_cfg.num_samples = 1;
        spline_cfg.undisturbed = true;
        spline_cfg.policy = brake;
        ValueConfig naive_cfg = spline_cfg;
        naive_cfg.maximizer = TemporalMax::discrete;
        for (int i = 0; i < spec.v0_count; ++i) {
            const double v0 = spec.v0_lo + (spec.v0_hi - spec.v0_lo) * i / (spec.v0_count - 1);
            const Eigen::Vector2d x0(0.0, v0);
            const ValueEstimate s = evaluate(*system, spline_cfg, x0);
            const ValueEstimate d = evaluate(*system, naive_cfg, x0);
            rows.push_back({dt, v0, v0, d.gradient[1], s.gradient[1], d.value, s.value});
        }
    }
    return rows;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << '\n';
    char buf[40];
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", row[c]);
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::io, path + " is empty");
    std::stringstream header(line);
    for (std::string cell; std::getline(header, cell, ',');) table.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw Error(ErrorCode::io, "bad number '" + cell + "' in " + path);
            row.push_back(v);
        }
        if (row.size() != table.header.size()) throw Error(ErrorCode::io, "ragged row in " + path);
        table.rows.push_back(std::move(row));
    }
    return table;
}

CsvTable boundary_table(const SystemModel& system, const SweepSpec& spec, const BoundaryGrid& grid) {
    const auto names = system.state_names();
    CsvTable t;
    t.header = {"i", "j", names[spec.axes[0].dim], names[spec.axes[1].dim], "value", "inside"};
    for (int i = 0; i < grid.values.rows(); ++i)
        for (int j = 0; j < grid.values.cols(); ++j) {
            const double v = grid.values(i, j);
            t.rows.push_back({double(i), double(j), spec.axes[0].at(i), spec.axes[1].at(j), v, v <= 0.0 ? 1.0 : 0.0});
        }
    return t;
}

CsvTable safe_region_table(const SystemModel& system, const SweepSpec& spec, const SafeRegionGrid& grid) {
    const auto names = system.state_names();
    CsvTable t;
    t.header = {"i", "j", names[spec.axes[0].dim], names[spec.axes[1].dim], "value", "inside", "safe"};
    for (int i = 0; i < grid.values.rows(); ++i)
        for (int j = 0; j < grid.values.cols(); ++j) {
            const double v = grid.values(i, j);
            t.rows.push_back({double(i), double(j), spec.axes[0].at(i), spec.axes[1].at(j), v,
                              v <= 0.0 ? 1.0 : 0.0, double(grid.safe(i, j))});
        }
    return t;
}

CsvTable trajectory_table(const SystemModel& system, const TrajectoryRecord& rec) {
    CsvTable t;
    t.header.push_back("t");
    for (const auto& name : system.state_names()) t.header.push_back(name);
    for (int i = 0; i < system.control_dim(); ++i) t.header.push_back("u_nom" + std::to_string(i));
    for (int i = 0; i < system.control_dim(); ++i) t.header.push_back("u" + std::to_string(i));
    for (const char* name : {"value", "status", "h"}) t.header.emplace_back(name);
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
        std::vector<double> row{rec.times[k]};
        row.insert(row.end(), rec.states[k].begin(), rec.states[k].end());
        row.insert(row.end(), rec.nominal_controls[k].begin(), rec.nominal_controls[k].end());
        row.insert(row.end(), rec.controls[k].begin(), rec.controls[k].end());
        row.push_back(rec.values[k]);
        row.push_back(static_cast<double>(rec.statuses[k]));
        row.push_back(rec.h_values[k]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable grad_study_table(const std::vector<GradStudyRow>& rows) {
    CsvTable t;
    t.header = {"dt", "v0", "analytic", "naive_gradient", "spline_gradient", "naive_error", "spline_error",
                "naive_value", "spline_value"};
    for (const auto& r : rows)
        t.rows.push_back({r.dt, r.v0, r.analytic, r.naive_gradient, r.spline_gradient,
                          std::abs(r.naive_gradient - r.analytic), std::abs(r.spline_gradient - r.analytic),
                          r.naive_value, r.spline_value});
    return t;
}

}  // namespace rpcbf::lab
