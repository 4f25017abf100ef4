#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclealign/orchestrator.hpp"
#include "cyclealign/ranker.hpp"

namespace cyclealign {

struct ConfigError : std::runtime_error {
    ConfigError(std::string field_path, const std::string& what)
        : std::runtime_error(field_path + ": " + what),
          field(std::move(field_path)) {}

    std::string field;
};

enum class RankerChoice { Simulated, Api };

struct ExperimentConfig {
    LoopConfig loop;
    int vocab_size = 16;
    int response_length = 4;
    RankerChoice ranker = RankerChoice::Simulated;
    SimulatedRankerConfig simulated;  // weights and golds already resolved
    ApiRankerConfig api;
    std::vector<Instruction> instructions;
    int steps = 100;
    int eval_interval = 10;
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir = "out";
    std::size_t demo_capacity = 8;
    std::vector<int> n_values = {1, 3, 5, 7};  // sweep-n default, includes 5
    nlohmann::json raw;  // snapshot written next to outputs
};

// Parses and validates; throws ConfigError naming the offending field.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct CliOverrides {
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::string> output_dir;
};

// Exit codes: 0 ok, 2 invalid config, 3 ranker unavailable, 4 malformed log.
int cmd_train(const std::string& config_path, const CliOverrides& overrides = {});
int cmd_ablate(const std::string& config_path,
               const CliOverrides& overrides = {});
int cmd_sweep_n(const std::string& config_path,
                const std::vector<int>& n_values = {},
                const CliOverrides& overrides = {});
int cmd_inspect(const std::string& log_path);

}  // namespace cyclealign
