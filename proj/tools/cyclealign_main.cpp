#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cyclealign/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"CycleAlign desk-scale alignment harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    std::vector<int> n_values;
    std::string log_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")
            ->required();
        cmd->add_option("--seeds", seeds, "override config seeds");
        cmd->add_option("--out", out_dir, "override output directory");
    };

    auto* train = app.add_subcommand("train", "run training per seed");
    add_common(train);

    auto* ablate = app.add_subcommand(
        "ablate", "run full / no_dynamic / no_icl with identical seeds");
    add_common(ablate);

    auto* sweep = app.add_subcommand(
        "sweep-n", "sweep the max-interactions threshold");
    add_common(sweep);
    sweep->add_option("--n-values", n_values,
                      "interaction thresholds to sweep (default from config)");

    auto* inspect =
        app.add_subcommand("inspect", "summarize an interaction JSONL log");
    inspect->add_option("--log", log_path, "interaction JSONL path")
        ->required();

    CLI11_PARSE(app, argc, argv);

    cyclealign::CliOverrides overrides;
    if (!seeds.empty()) overrides.seeds = seeds;
    if (!out_dir.empty()) overrides.output_dir = out_dir;

    if (train->parsed()) return cyclealign::cmd_train(config_path, overrides);
    if (ablate->parsed()) return cyclealign::cmd_ablate(config_path, overrides);
    if (sweep->parsed()) {
        return cyclealign::cmd_sweep_n(config_path, n_values, overrides);
    }
    return cyclealign::cmd_inspect(log_path);
}
