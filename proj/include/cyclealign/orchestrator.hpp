#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "cyclealign/losses.hpp"
#include "cyclealign/policy.hpp"
#include "cyclealign/prompting.hpp"
#include "cyclealign/ranker.hpp"
#include "cyclealign/types.hpp"

namespace cyclealign {

enum class Ablation { Full, NoDynamic, NoIcl };

struct LoopConfig {
    int max_interactions = 5;  // N
    int candidates = 3;        // k
    RankObjectiveKind objective = RankObjectiveKind::PRO;
    double learning_rate = 0.05;
    double temperature = 1.0;
    Ablation ablation = Ablation::Full;
    bool resample_per_interaction = true;
    std::uint64_t seed = 0;
};

// Per-interaction comparison of the black ranking against the simulated
// oracle; only available when the hidden-reward config is known.
struct OracleCheck {
    bool exact = false;
    double tau = 0.0;
};

struct StepResult {
    std::vector<InteractionRecord> interactions;
    std::vector<OracleCheck> oracle_checks;  // empty without an oracle
    double final_loss = 0.0;
    bool consistent_exit = false;
};

// One CycleAlign training step: up to N interactions of
// sample -> dual rank -> optimize -> agree -> feed back, exiting early when
// the two rankings of an iteration match.
StepResult run_step(const Instruction& x, ToyPolicy& policy, Ranker& ranker,
                    DemoBuffer& buffer, const LoopConfig& cfg, int step_index,
                    const Vocab& vocab, std::mt19937_64& rng,
                    const SimulatedRankerConfig* oracle = nullptr);

// As above, but additionally appends each record to `log` as it is produced,
// so a ranker failure mid-step still leaves the earlier interactions logged.
StepResult run_step(const Instruction& x, ToyPolicy& policy, Ranker& ranker,
                    DemoBuffer& buffer, const LoopConfig& cfg, int step_index,
                    const Vocab& vocab, std::mt19937_64& rng,
                    const SimulatedRankerConfig* oracle,
                    std::vector<InteractionRecord>* log);

struct MetricsRow {
    int step = 0;
    double mean_hidden_reward = 0.0;
    double black_rank_exact_match = 0.0;
    double mean_kendall_tau = 0.0;
    double loss = 0.0;
};

struct TrainingResult {
    std::vector<MetricsRow> metrics;
    std::vector<InteractionRecord> records;
    std::vector<int> interactions_per_step;
    std::vector<bool> consistent_exit_per_step;
    // Whole-run ranker accuracy against the oracle (NaN without one).
    double overall_exact_match = 0.0;
    double overall_mean_tau = 0.0;
};

// Cycles over the instructions for `steps` steps; every eval_interval steps
// a metrics row is recorded (hidden-reward and ranking-accuracy columns need
// the oracle and are NaN without it).
TrainingResult run_training(const std::vector<Instruction>& instructions,
                            ToyPolicy& policy, Ranker& ranker,
                            DemoBuffer& buffer, const LoopConfig& cfg,
                            int steps, int eval_interval, const Vocab& vocab,
                            const SimulatedRankerConfig* oracle = nullptr);

}  // namespace cyclealign
