#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rpcbf/filter.hpp"
#include "rpcbf/rollout.hpp"
#include "rpcbf/systems.hpp"
#include "rpcbf/value.hpp"

namespace rpcbf::lab {

enum class Method { none, pcbf, rpcbf, hocbf };

struct FilterSettings {
    Method method = Method::rpcbf;
    AlphaFn alpha{5.0};
    ConstraintMode mode = ConstraintMode::nominal_d;
    double hocbf_alpha1 = 1.0;
    double hocbf_alpha2 = 1.0;
    double control_dt = 0.1;
};

// Value settings actually used by `method`: pcbf forces the undisturbed
// midpoint rollout.
ValueConfig value_config_for(Method method, const ValueConfig& base);

struct GridAxis {
    int dim = 0;
    double lo = 0.0;
    double hi = 1.0;
    int count = 2;

    double at(int i) const { return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1); }
};

// Planar state grid: two swept dimensions, the rest fixed at base_state.
struct SweepSpec {
    VectorXd base_state;
    std::array<GridAxis, 2> axes;
    double eval_horizon = 15.0;  // closed-loop horizon for the safe region
    int eval_samples = 25;       // plant disturbance realizations

    void validate(const SystemModel& system) const;
    VectorXd state(int i, int j) const;
    int cells() const { return axes[0].count * axes[1].count; }
};

// Cell (i, j) is stored at row i, column j.
struct BoundaryGrid {
    MatrixXd values;
    std::vector<std::string> errors;
};

struct SafeRegionGrid {
    MatrixXd values;
    Eigen::MatrixXi safe;  // 1 safe, 0 unsafe, -1 not simulated
    std::vector<std::string> errors;
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<VectorXd> states;
    std::vector<VectorXd> nominal_controls;
    std::vector<VectorXd> controls;
    std::vector<double> values;
    std::vector<FilterStatus> statuses;
    std::vector<double> h_values;
    bool safe = true;
    bool diverged = false;
};

// Runs `task(index)` for index in [0, count) on a pool of `threads`
// workers (0 picks the hardware concurrency). Exceptions propagate after
// all workers stop.
void parallel_for(int count, int threads, const std::function<void(int)>& task);

// Barrier value per cell (V for pcbf/rpcbf, max(h, psi1) for hocbf).
BoundaryGrid sweep_filter_boundary(const SystemModel& system, const SweepSpec& spec, const ValueConfig& value,
                                   const FilterSettings& filter, int threads = 0);

struct PlantSettings {
    double vertex_weight = 0.5;
    std::uint64_t seed = 0;
    // Simulate only cells whose barrier value is <= 0.
    bool inside_only = false;
};

// Closed-loop safety per cell under `spec.eval_samples` plant disturbance
// realizations of length eval_horizon.
SafeRegionGrid sweep_safe_region(const SystemModel& system, const SweepSpec& spec, const ValueConfig& value,
                                 const FilterSettings& filter, const Policy& nominal, const PlantSettings& plant,
                                 int threads = 0);

// Plant disturbance realizations for closed-loop evaluation. Drawn with the
// same sampler as the filter but from the plant seed stream.
std::vector<DisturbanceTrajectory> plant_disturbances(const SystemModel& system, int steps, int count,
                                                      double vertex_weight, std::uint64_t seed);

// Closed loop at the filter's control rate. The filter re-draws its
// internal samples every control step from (value.seed, step).
TrajectoryRecord simulate(const SystemModel& system, const Policy& nominal, const FilterSettings& filter,
                          const ValueConfig& value, const ConstVecRef& x0, double duration,
                          const DisturbanceTrajectory& plant_disturbance);

struct GradStudySpec {
    std::vector<double> dt_list{0.05, 0.1, 0.2};
    double v0_lo = 0.5;
    double v0_hi = 2.0;
    int v0_count = 151;
    double horizon = 5.0;
};

struct GradStudyRow {
    double dt;
    double v0;
    double analytic;
    double naive_gradient;
    double spline_gradient;
    double naive_value;
    double spline_value;
};

// Braking double integrator (pdot = v, vdot = -1, h = p) from [0, v0]:
// d V / d v0 by the discrete knot maximum and by the spline maximum,
// against the continuous-time value v0.
std::vector<GradStudyRow> gradient_error_study(const GradStudySpec& spec);

// CSV with a header row; numbers are written with 17 significant digits so
// reading them back reproduces the doubles exactly.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

CsvTable boundary_table(const SystemModel& system, const SweepSpec& spec, const BoundaryGrid& grid);
CsvTable safe_region_table(const SystemModel& system, const SweepSpec& spec, const SafeRegionGrid& grid);
CsvTable trajectory_table(const SystemModel& system, const TrajectoryRecord& record);
CsvTable grad_study_table(const std::vector<GradStudyRow>& rows);

}  // namespace rpcbf::lab
