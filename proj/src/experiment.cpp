#include "rpcbf/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>

#include "rpcbf/error.hpp"
#include "rpcbf/version.hpp"

namespace rpcbf::lab {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& message) {
    throw Error(ErrorCode::config, where + ": " + message);
}

// Checks that `node` is an object whose keys all appear in `allowed`.
void check_keys(const json& node, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!node.is_object()) config_error(where, "expected an object");
    std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& item : node.items())
        if (!known.count(item.key())) config_error(where, "unknown key '" + item.key() + "'");
}

double number(const json& node, const std::string& where) {
    if (!node.is_number()) config_error(where, "expected a number");
    return node.get<double>();
}

double number_or(const json& parent, const char* key, double fallback, const std::string& where) {
    return parent.contains(key) ? number(parent.at(key), where + "." + key) : fallback;
}

int count_or(const json& parent, const char* key, int fallback, const std::string& where) {
    if (!parent.contains(key)) return fallback;
    const json& node = parent.at(key);
    if (!node.is_number_integer()) config_error(where + "." + key, "expected an integer");
    return node.get<int>();
}

bool flag_or(const json& parent, const char* key, bool fallback, const std::string& where) {
    if (!parent.contains(key)) return fallback;
    const json& node = parent.at(key);
    if (!node.is_boolean()) config_error(where + "." + key, "expected true or false");
    return node.get<bool>();
}

std::string string_or(const json& parent, const char* key, const std::string& fallback, const std::string& where) {
    if (!parent.contains(key)) return fallback;
    const json& node = parent.at(key);
    if (!node.is_string()) config_error(where + "." + key, "expected a string");
    return node.get<std::string>();
}

VectorXd vector_of(const json& node, const std::string& where) {
    if (!node.is_array()) config_error(where, "expected an array of numbers");
    VectorXd out(static_cast<Eigen::Index>(node.size()));
    for (std::size_t i = 0; i < node.size(); ++i) out[i] = number(node[i], where);
    return out;
}

// A flat array is a single row; an array of arrays gives one row per control.
MatrixXd matrix_of(const json& node, const std::string& where) {
    if (!node.is_array() || node.empty()) config_error(where, "expected a non-empty array");
    if (!node[0].is_array()) return vector_of(node, where).transpose();
    const auto cols = static_cast<Eigen::Index>(node[0].size());
    MatrixXd out(static_cast<Eigen::Index>(node.size()), cols);
    for (std::size_t r = 0; r < node.size(); ++r) {
        const VectorXd row = vector_of(node[r], where);
        if (row.size() != cols) config_error(where, "rows have different lengths");
        out.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return out;
}

json to_json(const VectorXd& v) { return json(std::vector<double>(v.begin(), v.end())); }

json to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(VectorXd(m.row(r).transpose())));
    return rows;
}

std::pair<double, double> interval(const json& node, const std::string& where) {
    const VectorXd v = vector_of(node, where);
    if (v.size() != 2) config_error(where, "expected [lo, hi]");
    return {v[0], v[1]};
}

SystemPtr parse_system(const json& node, json& resolved) {
    const std::string where = "system";
    if (!node.is_object()) config_error(where, "expected an object");
    const std::string name = string_or(node, "name", "double_integrator", where);
    if (name == "double_integrator") {
        check_keys(node, where, {"name", "mass", "position_bound", "control_bound", "two_sided"});
        DoubleIntegratorParams p;
        p.mass_lo = 0.8;
        p.mass_hi = 1.2;
        if (node.contains("mass")) std::tie(p.mass_lo, p.mass_hi) = interval(node.at("mass"), where + ".mass");
        p.position_bound = number_or(node, "position_bound", p.position_bound, where);
        p.control_bound = number_or(node, "control_bound", p.control_bound, where);
        p.two_sided = flag_or(node, "two_sided", p.two_sided, where);
        resolved = {{"name", name},
                    {"mass", {p.mass_lo, p.mass_hi}},
                    {"position_bound", p.position_bound},
                    {"control_bound", p.control_bound},
                    {"two_sided", p.two_sided}};
        try {
            return make_double_integrator(p);
        } catch (const Error& e) {
            config_error(where, e.what());
        }
    }
    if (name == "segway") {
        check_keys(node, where,
                   {"name", "body_mass", "wheel_mass", "wheel_radius", "wheel_inertia", "com_height", "body_inertia",
                    "gravity", "torque_bound", "position_bound", "angle_bound", "position_scale", "angle_scale"});
        SegwayParams p;
        if (node.contains("body_mass"))
            std::tie(p.body_mass_lo, p.body_mass_hi) = interval(node.at("body_mass"), where + ".body_mass");
        p.wheel_mass = number_or(node, "wheel_mass", p.wheel_mass, where);
        p.wheel_radius = number_or(node, "wheel_radius", p.wheel_radius, where);
        p.wheel_inertia = number_or(node, "wheel_inertia", p.wheel_inertia, where);
        p.com_height = number_or(node, "com_height", p.com_height, where);
        p.body_inertia = number_or(node, "body_inertia", p.body_inertia, where);
        p.gravity = number_or(node, "gravity", p.gravity, where);
        p.torque_bound = number_or(node, "torque_bound", p.torque_bound, where);
        p.position_bound = number_or(node, "position_bound", p.position_bound, where);
        p.angle_bound = number_or(node, "angle_bound", p.angle_bound, where);
        p.position_scale = number_or(node, "position_scale", 1.0 / p.position_bound, where);
        p.angle_scale = number_or(node, "angle_scale", 1.0 / p.angle_bound, where);
        resolved = {{"name", name},
                    {"body_mass", {p.body_mass_lo, p.body_mass_hi}},
                    {"wheel_mass", p.wheel_mass},
                    {"wheel_radius", p.wheel_radius},
                    {"wheel_inertia", p.wheel_inertia},
                    {"com_height", p.com_height},
                    {"body_inertia", p.body_inertia},
                    {"gravity", p.gravity},
                    {"torque_bound", p.torque_bound},
                    {"position_bound", p.position_bound},
                    {"angle_bound", p.angle_bound},
                    {"position_scale", p.position_scale},
                    {"angle_scale", p.angle_scale}};
        try {
            return make_segway(p);
        } catch (const Error& e) {
            config_error(where, e.what());
        }
    }
    config_error(where + ".name", "unknown system '" + name + "'");
}

PolicyKind policy_kind(const std::string& name, const std::string& where) {
    if (name == "saturating_linear") return PolicyKind::saturating_linear;
    if (name == "constant") return PolicyKind::constant;
    if (name == "bang_bang") return PolicyKind::bang_bang;
    config_error(where, "unknown policy kind '" + name + "'");
}

const char* policy_name(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::saturating_linear: return "saturating_linear";
    case PolicyKind::constant: return "constant";
    case PolicyKind::bang_bang: return "bang_bang";
    }
    return "";
}

// Rollout policy used when the config names none: braking on the double
// integrator, an LQR balance controller on the segway.
json default_rollout_policy(const SystemModel& system) {
    if (system.name() == "segway")
        return {{"kind", "saturating_linear"}, {"gains", {-0.0316, -77.75, -0.691, -12.68}}};
    return {{"kind", "saturating_linear"}, {"gains", {0.0, 10.0}}};
}

PolicyPtr parse_policy(const SystemModel& system, const json& node, const std::string& where, json& resolved) {
    check_keys(node, where, {"kind", "gains", "constant"});
    const PolicyKind kind = policy_kind(string_or(node, "kind", "saturating_linear", where), where + ".kind");
    MatrixXd gains = MatrixXd::Zero(system.control_dim(), system.state_dim());
    VectorXd constant = VectorXd::Zero(system.control_dim());
    if (node.contains("gains")) gains = matrix_of(node.at("gains"), where + ".gains");
    if (node.contains("constant")) constant = vector_of(node.at("constant"), where + ".constant");
    resolved = {{"kind", policy_name(kind)}};
    if (kind == PolicyKind::constant) resolved["constant"] = to_json(constant);
    else resolved["gains"] = to_json(gains);
    try {
        return make_policy(system, kind, gains, constant);
    } catch (const Error& e) {
        config_error(where, e.what());
    }
}

Method parse_method(const std::string& name) {
    if (name == "none") return Method::none;
    if (name == "pcbf") return Method::pcbf;
    if (name == "rpcbf") return Method::rpcbf;
    if (name == "hocbf") return Method::hocbf;
    config_error("filter.method", "unknown method '" + name + "'");
}

const char* method_name(Method m) {
    switch (m) {
    case Method::none: return "none";
    case Method::pcbf: return "pcbf";
    case Method::rpcbf: return "rpcbf";
    case Method::hocbf: return "hocbf";
    }
    return "";
}

std::optional<SweepSpec> parse_grid(const SystemModel& system, const json& node, json& resolved) {
    const std::string where = "experiment.grid";
    if (!node.is_array() || static_cast<int>(node.size()) != system.state_dim())
        config_error(where, "expected one entry per state dimension");
    SweepSpec spec;
    spec.base_state = VectorXd::Zero(system.state_dim());
    int swept = 0;
    resolved = json::array();
    for (int i = 0; i < system.state_dim(); ++i) {
        const json& entry = node[static_cast<std::size_t>(i)];
        if (entry.is_number()) {
            spec.base_state[i] = entry.get<double>();
            resolved.push_back(spec.base_state[i]);
            continue;
        }
        if (!entry.is_array() || entry.size() != 3 || !entry[2].is_number_integer())
            config_error(where, "entries are a fixed number or [lo, hi, count]");
        if (swept == 2) config_error(where, "exactly two dimensions must be swept");
        GridAxis& axis = spec.axes[static_cast<std::size_t>(swept++)];
        axis.dim = i;
        axis.lo = number(entry[0], where);
        axis.hi = number(entry[1], where);
        axis.count = entry[2].get<int>();
        spec.base_state[i] = axis.lo;
        resolved.push_back({axis.lo, axis.hi, axis.count});
    }
    if (swept != 2) config_error(where, "exactly two dimensions must be swept");
    return spec;
}

}  // namespace

ExperimentConfig parse_config(const json& document) {
    try {
        check_keys(document, "config", {"seed", "system", "policy", "value", "filter", "experiment"});
        ExperimentConfig cfg;
        json& out = cfg.resolved;
        out = json::object();

        if (document.contains("seed")) {
            if (!document.at("seed").is_number_unsigned()) config_error("seed", "expected a non-negative integer");
            cfg.seed = document.at("seed").get<std::uint64_t>();
        }
        out["seed"] = cfg.seed;

        cfg.system = parse_system(document.value("system", json::object()), out["system"]);
        const SystemModel& system = *cfg.system;

        const json policy = document.value("policy", default_rollout_policy(system));
        cfg.value.policy = parse_policy(system, policy, "policy", out["policy"]);

        const json value = document.value("value", json::object());
        check_keys(value, "value", {"T", "dt", "N", "vertex_weight", "maximizer"});
        cfg.value.horizon = number_or(value, "T", 5.0, "value");
        cfg.value.dt = number_or(value, "dt", 0.1, "value");
        cfg.value.num_samples = count_or(value, "N", 64, "value");
        cfg.value.vertex_weight = number_or(value, "vertex_weight", 0.5, "value");
        const std::string maximizer = string_or(value, "maximizer", "spline", "value");
        if (maximizer == "spline") cfg.value.maximizer = TemporalMax::spline;
        else if (maximizer == "discrete") cfg.value.maximizer = TemporalMax::discrete;
        else config_error("value.maximizer", "expected 'spline' or 'discrete'");
        cfg.value.seed = cfg.seed;
        try {
            cfg.value.validate(system);
        } catch (const Error& e) {
            config_error("value", e.what());
        }
        out["value"] = {{"T", cfg.value.horizon},
                        {"dt", cfg.value.dt},
                        {"N", cfg.value.num_samples},
                        {"vertex_weight", cfg.value.vertex_weight},
                        {"maximizer", maximizer}};

        const json filter = document.value("filter", json::object());
        check_keys(filter, "filter",
                   {"method", "alpha", "mode", "hocbf_alpha1", "hocbf_alpha2", "control_dt", "nominal_policy"});
        FilterSettings& fs = cfg.filter;
        fs.method = parse_method(string_or(filter, "method", "rpcbf", "filter"));
        fs.alpha.coefficient = number_or(filter, "alpha", 5.0, "filter");
        const std::string mode = string_or(filter, "mode", "nominal_d", "filter");
        if (mode == "nominal_d") fs.mode = ConstraintMode::nominal_d;
        else if (mode == "worst_vertex") fs.mode = ConstraintMode::worst_vertex;
        else config_error("filter.mode", "expected 'nominal_d' or 'worst_vertex'");
        fs.hocbf_alpha1 = number_or(filter, "hocbf_alpha1", 1.0, "filter");
        fs.hocbf_alpha2 = number_or(filter, "hocbf_alpha2", 1.0, "filter");
        fs.control_dt = number_or(filter, "control_dt", cfg.value.dt, "filter");
        if (!(fs.alpha.coefficient > 0.0)) config_error("filter.alpha", "must be positive");
        if (!(fs.control_dt > 0.0)) config_error("filter.control_dt", "must be positive");
        if (!(fs.hocbf_alpha1 > 0.0 && fs.hocbf_alpha2 > 0.0)) config_error("filter", "HOCBF alphas must be positive");
        if (fs.method == Method::hocbf && system.name() != "double_integrator")
            config_error("filter.method", "hocbf is only defined for the double integrator");
        json nominal_resolved;
        cfg.nominal = parse_policy(system, filter.value("nominal_policy", json{{"kind", "constant"}}),
                                   "filter.nominal_policy", nominal_resolved);
        out["filter"] = {{"method", method_name(fs.method)},
                         {"alpha", fs.alpha.coefficient},
                         {"mode", mode},
                         {"hocbf_alpha1", fs.hocbf_alpha1},
                         {"hocbf_alpha2", fs.hocbf_alpha2},
                         {"control_dt", fs.control_dt},
                         {"nominal_policy", nominal_resolved}};

        const json experiment = document.value("experiment", json::object());
        check_keys(experiment, "experiment",
                   {"grid", "T_bar", "N_bar", "plant_vertex_weight", "inside_only", "threads", "x0", "duration",
                    "grad_study"});
        json& xo = out["experiment"];
        xo = json::object();
        const double t_bar = number_or(experiment, "T_bar", 15.0, "experiment");
        const int n_bar = count_or(experiment, "N_bar", 25, "experiment");
        if (experiment.contains("grid")) {
            cfg.sweep = parse_grid(system, experiment.at("grid"), xo["grid"]);
            cfg.sweep->eval_horizon = t_bar;
            cfg.sweep->eval_samples = n_bar;
            try {
                cfg.sweep->validate(system);
            } catch (const Error& e) {
                config_error("experiment.grid", e.what());
            }
        }
        if (!(t_bar > 0.0)) config_error("experiment.T_bar", "must be positive");
        if (n_bar < 1) config_error("experiment.N_bar", "must be at least 1");
        cfg.plant.vertex_weight = number_or(experiment, "plant_vertex_weight", 0.5, "experiment");
        if (!(cfg.plant.vertex_weight >= 0.0 && cfg.plant.vertex_weight <= 1.0))
            config_error("experiment.plant_vertex_weight", "must lie in [0, 1]");
        cfg.plant.inside_only = flag_or(experiment, "inside_only", false, "experiment");
        cfg.plant.seed = cfg.seed;
        cfg.threads = count_or(experiment, "threads", 0, "experiment");
        cfg.duration = number_or(experiment, "duration", t_bar, "experiment");
        if (!(cfg.duration > 0.0)) config_error("experiment.duration", "must be positive");
        if (experiment.contains("x0")) {
            const json& states = experiment.at("x0");
            if (!states.is_array()) config_error("experiment.x0", "expected an array of states");
            for (const auto& s : states) {
                VectorXd x = vector_of(s, "experiment.x0");
                if (x.size() != system.state_dim()) config_error("experiment.x0", "state has the wrong dimension");
                cfg.initial_states.push_back(std::move(x));
            }
        } else {
            cfg.initial_states.push_back(VectorXd::Zero(system.state_dim()));
        }
        json x0 = json::array();
        for (const auto& x : cfg.initial_states) x0.push_back(to_json(x));

        if (experiment.contains("grad_study")) {
            const json& gs = experiment.at("grad_study");
            check_keys(gs, "experiment.grad_study", {"dt_list", "v0", "horizon"});
            GradStudySpec& spec = cfg.grad_study;
            if (gs.contains("dt_list")) {
                const VectorXd dts = vector_of(gs.at("dt_list"), "experiment.grad_study.dt_list");
                spec.dt_list.assign(dts.begin(), dts.end());
            }
            if (gs.contains("v0")) {
                const json& v0 = gs.at("v0");
                if (!v0.is_array() || v0.size() != 3 || !v0[2].is_number_integer())
                    config_error("experiment.grad_study.v0", "expected [lo, hi, count]");
                spec.v0_lo = number(v0[0], "experiment.grad_study.v0");
                spec.v0_hi = number(v0[1], "experiment.grad_study.v0");
                spec.v0_count = v0[2].get<int>();
            }
            spec.horizon = number_or(gs, "horizon", spec.horizon, "experiment.grad_study");
        }
        for (double dt : cfg.grad_study.dt_list)
            if (!(dt > 0.0)) config_error("experiment.grad_study.dt_list", "entries must be positive");

        xo["T_bar"] = t_bar;
        xo["N_bar"] = n_bar;
        xo["plant_vertex_weight"] = cfg.plant.vertex_weight;
        xo["inside_only"] = cfg.plant.inside_only;
        xo["threads"] = cfg.threads;
        xo["x0"] = x0;
        xo["duration"] = cfg.duration;
        xo["grad_study"] = {{"dt_list", cfg.grad_study.dt_list},
                            {"v0", {cfg.grad_study.v0_lo, cfg.grad_study.v0_hi, cfg.grad_study.v0_count}},
                            {"horizon", cfg.grad_study.horizon}};
        return cfg;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open config " + path);
    json document;
    try {
        document = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::config, path + ": " + e.what());
    }
    return parse_config(document);
}

void set_seed(ExperimentConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.value.seed = seed;
    config.plant.seed = seed;
    config.resolved["seed"] = seed;
}

namespace {

std::filesystem::path prepare(const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create " + out_dir + ": " + ec.message());
    return std::filesystem::path(out_dir);
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& config,
                    const std::vector<std::string>& errors, json extra = json::object()) {
    json manifest = {{"command", command},
                     {"seed", config.seed},
                     {"version", kVersion},
                     {"config", config.resolved},
                     {"errors", errors}};
    for (const auto& item : extra.items()) manifest[item.key()] = item.value();
    const auto path = dir / "run.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << manifest.dump(2) << '\n';
}

const SweepSpec& require_grid(const ExperimentConfig& config) {
    if (!config.sweep) throw Error(ErrorCode::config, "experiment.grid is required for sweeps");
    return *config.sweep;
}

}  // namespace

int run_value(const ExperimentConfig& config, const VectorXd& state, const std::string& out_dir) {
    const SystemModel& system = *config.system;
    if (state.size() != system.state_dim() || !state.allFinite())
        throw Error(ErrorCode::invalid_argument, "state must have " + std::to_string(system.state_dim()) +
                                                     " finite components");
    const auto dir = prepare(out_dir);
    const Method method = config.filter.method == Method::pcbf ? Method::pcbf : Method::rpcbf;
    const ValueEstimate est = evaluate(system, value_config_for(method, config.value), state);

    CsvTable table;
    const auto names = system.state_names();
    table.header = names;
    table.header.insert(table.header.end(), {"h", "value"});
    for (const auto& n : names) table.header.push_back("grad_" + n);
    table.header.insert(table.header.end(), {"argmax_sample", "argmax_time"});
    std::vector<double> row(state.begin(), state.end());
    row.push_back(system.constraint(state));
    row.push_back(est.value);
    row.insert(row.end(), est.gradient.begin(), est.gradient.end());
    row.push_back(est.argmax_sample);
    row.push_back(est.argmax_time);
    table.rows.push_back(std::move(row));
    write_csv((dir / "value.csv").string(), table);
    write_manifest(dir, "value", config, {}, {{"state", to_json(state)}});
    return 0;
}

int run_sweep_boundary(const ExperimentConfig& config, const std::string& out_dir) {
    const SweepSpec& spec = require_grid(config);
    const auto dir = prepare(out_dir);
    const BoundaryGrid grid = sweep_filter_boundary(*config.system, spec, config.value, config.filter, config.threads);
    write_csv((dir / "boundary.csv").string(), boundary_table(*config.system, spec, grid));
    write_manifest(dir, "sweep-boundary", config, grid.errors);
    return static_cast<int>(grid.errors.size());
}

int run_sweep_safe_region(const ExperimentConfig& config, const std::string& out_dir) {
    const SweepSpec& spec = require_grid(config);
    const auto dir = prepare(out_dir);
    const SafeRegionGrid grid = sweep_safe_region(*config.system, spec, config.value, config.filter, *config.nominal,
                                                  config.plant, config.threads);
    write_csv((dir / "safe_region.csv").string(), safe_region_table(*config.system, spec, grid));
    write_manifest(dir, "sweep-safe-region", config, grid.errors);
    return static_cast<int>(grid.errors.size());
}

int run_grad_study(const ExperimentConfig& config, const std::string& out_dir) {
    const auto dir = prepare(out_dir);
    write_csv((dir / "grad_study.csv").string(), grad_study_table(gradient_error_study(config.grad_study)));
    write_manifest(dir, "grad-study", config, {});
    return 0;
}

int run_simulate(const ExperimentConfig& config, const std::string& out_dir) {
    const SystemModel& system = *config.system;
    const auto dir = prepare(out_dir);
    const int steps = static_cast<int>(std::lround(config.duration / config.filter.control_dt));
    const auto realizations = plant_disturbances(system, std::max(steps, 1),
                                                 static_cast<int>(config.initial_states.size()),
                                                 config.plant.vertex_weight, config.plant.seed);
    json summary = json::array();
    for (std::size_t i = 0; i < config.initial_states.size(); ++i) {
        const TrajectoryRecord rec = simulate(system, *config.nominal, config.filter, config.value,
                                              config.initial_states[i], config.duration, realizations[i]);
        write_csv((dir / ("traj_" + std::to_string(i) + ".csv")).string(), trajectory_table(system, rec));
        summary.push_back({{"index", i}, {"safe", rec.safe}, {"diverged", rec.diverged}});
    }
    write_manifest(dir, "simulate", config, {}, {{"trajectories", summary}});
    return 0;
}

}  // namespace rpcbf::lab
