// Batch experiment runner: sampling, guided generation, theorem-verification
// studies, and micro-MLP training, driven by TOML experiment configs.
//
//   flowguide {sample|guide|verify|train} --config <path> [--set k=v]... [--jobs N] [--seed S]
//
// Exit codes: 0 pass, 1 config error, 2 numerical divergence/failure,
// 3 inconclusive study.

#include "flowguide/runner.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
    CLI::App app{"flowguide: training-free guided generation on analytic flow models"};
    app.require_subcommand(1);

    flowguide::CliOptions opts;
    std::int64_t seed_arg = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "TOML experiment config")->required();
        cmd->add_option("--set", opts.overrides,
                        "override a scalar config field, e.g. --set solver.n_steps=128");
        cmd->add_option("--jobs", opts.jobs, "parallel workers for independent seeds/grid points");
        cmd->add_option("--seed", seed_arg, "override the config seed");
    };

    add_common(app.add_subcommand("sample", "run unguided solves and export trajectories"));
    add_common(app.add_subcommand("guide", "run guided sampling or end-to-end optimization"));
    add_common(app.add_subcommand("verify", "run theorem-verification studies (acceptance gate)"));
    add_common(app.add_subcommand("train", "train the micro-MLP flow-matching backend"));

    CLI11_PARSE(app, argc, argv);

    if (seed_arg >= 0) opts.seed = static_cast<std::uint64_t>(seed_arg);
    return flowguide::run_command(app.get_subcommands().front()->get_name(), opts);
}
