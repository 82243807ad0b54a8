#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpcbf/lab.hpp"

namespace rpcbf::lab {

// Fully resolved experiment description. Every field has a default, so an
// empty document describes the double integrator with the RPCBF filter.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    SystemPtr system;
    PolicyPtr nominal;  // filtered policy; the rollout policy lives in value.policy
    ValueConfig value;
    FilterSettings filter;
    std::optional<SweepSpec> sweep;  // present when experiment.grid is given
    PlantSettings plant;
    int threads = 0;
    std::vector<VectorXd> initial_states;
    double duration = 15.0;
    GradStudySpec grad_study;

    nlohmann::json resolved;  // canonical document written to run.json
};

// Unknown keys, wrong types and invalid values throw Error(config).
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::string& path);

// Replaces the master seed everywhere it is used.
void set_seed(ExperimentConfig& config, std::uint64_t seed);

// Subcommand runners. Each writes its CSV artifacts and run.json into
// out_dir (created if missing) and returns the number of per-cell errors.
int run_value(const ExperimentConfig& config, const VectorXd& state, const std::string& out_dir);
int run_sweep_boundary(const ExperimentConfig& config, const std::string& out_dir);
int run_sweep_safe_region(const ExperimentConfig& config, const std::string& out_dir);
int run_grad_study(const ExperimentConfig& config, const std::string& out_dir);
int run_simulate(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace rpcbf::lab
