#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rpcbf/rpcbf.h"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "master seed, overrides the config");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

int run(const std::string& command, const Common& c, const std::vector<double>& state) {
    rpcbf_experiment* exp = nullptr;
    int rc = rpcbf_experiment_load(c.config.c_str(), &exp);
    if (rc != RPCBF_OK) {
        std::fprintf(stderr, "error: %s\n", rpcbf_last_error());
        return rc;
    }
    if (c.seed) rpcbf_experiment_set_seed(exp, *c.seed);
    int cell_errors = 0;
    rc = rpcbf_experiment_run(exp, command.c_str(), c.out.c_str(), state.empty() ? nullptr : state.data(),
                              static_cast<int>(state.size()), &cell_errors);
    rpcbf_experiment_free(exp);
    if (rc != RPCBF_OK) {
        std::fprintf(stderr, "error: %s\n", rpcbf_last_error());
        return rc;
    }
    if (cell_errors > 0) std::fprintf(stderr, "warning: %d grid cells failed, see run.json\n", cell_errors);
    std::printf("%s: wrote %s\n", command.c_str(), c.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust policy CBF experiments"};
    app.set_version_flag("--version", std::string(rpcbf_version()));
    app.require_subcommand(1);

    Common value_opts, boundary_opts, safe_opts, grad_opts, sim_opts;
    std::vector<double> state;

    auto* value = app.add_subcommand("value", "evaluate V and its gradient at one state");
    value->add_option("state", state, "state components")->required()->expected(1, -1);
    add_common(value, value_opts);
    add_common(app.add_subcommand("sweep-boundary", "V on a planar state grid"), boundary_opts);
    add_common(app.add_subcommand("sweep-safe-region", "closed-loop safety on a planar state grid"), safe_opts);
    add_common(app.add_subcommand("grad-study", "gradient error of discrete and spline maxima"), grad_opts);
    add_common(app.add_subcommand("simulate", "closed-loop trajectories from experiment.x0"), sim_opts);

    CLI11_PARSE(app, argc, argv);

    if (value->parsed()) return run("value", value_opts, state);
    for (auto [name, opts] : {std::pair{"sweep-boundary", &boundary_opts}, std::pair{"sweep-safe-region", &safe_opts},
                              std::pair{"grad-study", &grad_opts}, std::pair{"simulate", &sim_opts}}) {
        if (app.got_subcommand(name)) return run(name, *opts, {});
    }
    return 1;
}
