#include "cyclealign/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <random>

#include "cyclealign/prompting.hpp"

namespace cyclealign {

namespace fs = std::filesystem;

namespace {

const nlohmann::json* find(const nlohmann::json& j, const std::string& key) {
    if (!j.is_object()) return nullptr;
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, const T& fallback,
         const std::string& path) {
    const auto* v = find(j, key);
    if (!v) return fallback;
    try {
        return v->get<T>();
    } catch (const std::exception&) {
        throw ConfigError(path, "has the wrong type");
    }
}

RankObjectiveKind parse_objective(const std::string& name) {
    if (name == "PRO" || name == "pro") return RankObjectiveKind::PRO;
    if (name == "RRHF" || name == "rrhf") return RankObjectiveKind::RRHF;
    throw ConfigError("loop.objective", "must be \"PRO\" or \"RRHF\"");
}

Ablation parse_ablation(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "no_dynamic") return Ablation::NoDynamic;
    if (name == "no_icl") return Ablation::NoIcl;
    throw ConfigError("loop.ablation",
                      "must be \"full\", \"no_dynamic\" or \"no_icl\"");
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::NoDynamic: return "no_dynamic";
        case Ablation::NoIcl: return "no_icl";
    }
    return "full";
}

std::vector<Instruction> default_instructions(int count) {
    std::vector<Instruction> out;
    for (int i = 0; i < count; ++i) {
        Instruction inst;
        inst.id = "inst" + std::to_string(i);
        inst.text = "Human: Please write the response you would prefer (case " +
                    std::to_string(i) + ").\nAssistant:";
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("<root>", "config must be an object");
    ExperimentConfig cfg;
    cfg.raw = j;

    const nlohmann::json loop =
        get_or<nlohmann::json>(j, "loop", nlohmann::json::object(), "loop");
    cfg.loop.max_interactions =
        get_or<int>(loop, "max_interactions", 5, "loop.max_interactions");
    cfg.loop.candidates = get_or<int>(loop, "candidates", 3, "loop.candidates");
    cfg.loop.objective = parse_objective(
        get_or<std::string>(loop, "objective", "PRO", "loop.objective"));
    cfg.loop.learning_rate =
        get_or<double>(loop, "learning_rate", 0.05, "loop.learning_rate");
    cfg.loop.temperature =
        get_or<double>(loop, "temperature", 1.0, "loop.temperature");
    cfg.loop.ablation = parse_ablation(
        get_or<std::string>(loop, "ablation", "full", "loop.ablation"));
    cfg.loop.resample_per_interaction = get_or<bool>(
        loop, "resample_per_interaction", true, "loop.resample_per_interaction");
    if (cfg.loop.max_interactions < 1) {
        throw ConfigError("loop.max_interactions", "must be >= 1");
    }
    if (cfg.loop.candidates < 2) {
        throw ConfigError("loop.candidates", "must be >= 2");
    }
    if (!(cfg.loop.learning_rate >= 0.0)) {
        throw ConfigError("loop.learning_rate", "must be >= 0");
    }
    if (!(cfg.loop.temperature > 0.0)) {
        throw ConfigError("loop.temperature", "must be > 0");
    }

    const nlohmann::json policy =
        get_or<nlohmann::json>(j, "policy", nlohmann::json::object(), "policy");
    cfg.vocab_size = get_or<int>(policy, "vocab_size", 16, "policy.vocab_size");
    cfg.response_length =
        get_or<int>(policy, "response_length", 4, "policy.response_length");
    if (cfg.vocab_size < 2) throw ConfigError("policy.vocab_size", "must be >= 2");
    if (cfg.response_length < 1) {
        throw ConfigError("policy.response_length", "must be >= 1");
    }

    cfg.steps = get_or<int>(j, "steps", 100, "steps");
    cfg.eval_interval = get_or<int>(j, "eval_interval", 10, "eval_interval");
    if (cfg.steps < 1) throw ConfigError("steps", "must be >= 1");
    if (cfg.eval_interval < 1) throw ConfigError("eval_interval", "must be >= 1");
    cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", {1}, "seeds");
    if (cfg.seeds.empty()) throw ConfigError("seeds", "must be non-empty");
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out", "output_dir");
    if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must be non-empty");
    cfg.demo_capacity = get_or<std::size_t>(j, "demo_capacity", 8, "demo_capacity");
    if (cfg.demo_capacity < 1) throw ConfigError("demo_capacity", "must be >= 1");
    cfg.n_values =
        get_or<std::vector<int>>(j, "n_values", {1, 3, 5, 7}, "n_values");
    for (int n : cfg.n_values) {
        if (n < 1) throw ConfigError("n_values", "every entry must be >= 1");
    }

    if (const auto* insts = find(j, "instructions")) {
        try {
            cfg.instructions = insts->get<std::vector<Instruction>>();
        } catch (const std::exception&) {
            throw ConfigError("instructions", "must be a list of {id, text}");
        }
        for (const auto& inst : cfg.instructions) {
            if (inst.text.empty()) {
                throw ConfigError("instructions", "instruction text must be non-empty");
            }
        }
    } else {
        const int count = get_or<int>(j, "num_instructions", 2, "num_instructions");
        if (count < 1) throw ConfigError("num_instructions", "must be >= 1");
        cfg.instructions = default_instructions(count);
    }

    const nlohmann::json ranker =
        get_or<nlohmann::json>(j, "ranker", nlohmann::json::object(), "ranker");
    const std::string type =
        get_or<std::string>(ranker, "type", "simulated", "ranker.type");
    if (type == "simulated") {
        cfg.ranker = RankerChoice::Simulated;
        cfg.simulated.epsilon0 =
            get_or<double>(ranker, "epsilon0", 0.3, "ranker.epsilon0");
        cfg.simulated.rho = get_or<double>(ranker, "rho", 0.7, "ranker.rho");
        if (cfg.simulated.epsilon0 < 0.0 || cfg.simulated.epsilon0 > 1.0) {
            throw ConfigError("ranker.epsilon0", "must be in [0, 1]");
        }
        if (!(cfg.simulated.rho > 0.0) || cfg.simulated.rho > 1.0) {
            throw ConfigError("ranker.rho", "must be in (0, 1]");
        }
        if (const auto* w = find(ranker, "reward_weights")) {
            try {
                cfg.simulated.reward_weights = w->get<std::vector<double>>();
            } catch (const std::exception&) {
                throw ConfigError("ranker.reward_weights", "must be a list of reals");
            }
            if (static_cast<int>(cfg.simulated.reward_weights.size()) !=
                cfg.vocab_size) {
                throw ConfigError("ranker.reward_weights",
                                  "length must equal policy.vocab_size");
            }
        } else {
            const auto reward_seed = get_or<std::uint64_t>(
                ranker, "reward_seed", 17, "ranker.reward_seed");
            std::mt19937_64 rng(reward_seed);
            std::normal_distribution<double> gauss(0.0, 1.0);
            cfg.simulated.reward_weights.resize(
                static_cast<std::size_t>(cfg.vocab_size));
            for (double& w : cfg.simulated.reward_weights) w = gauss(rng);
        }
        // Gold response: the reward is additive over token counts, so the
        // best-weight token repeated L times attains the global maximum.
        int best = 0;
        for (int v = 1; v < cfg.vocab_size; ++v) {
            if (cfg.simulated.reward_weights[static_cast<std::size_t>(v)] >
                cfg.simulated.reward_weights[static_cast<std::size_t>(best)]) {
                best = v;
            }
        }
        for (const auto& inst : cfg.instructions) {
            cfg.simulated.gold_responses[inst.id] = TokenSeq(
                static_cast<std::size_t>(cfg.response_length), best);
        }
    } else if (type == "api") {
        cfg.ranker = RankerChoice::Api;
        cfg.api.endpoint =
            get_or<std::string>(ranker, "endpoint", "", "ranker.endpoint");
        if (cfg.api.endpoint.empty()) {
            throw ConfigError("ranker.endpoint", "must be set for the api ranker");
        }
        cfg.api.model = get_or<std::string>(ranker, "model", "", "ranker.model");
        if (cfg.api.model.empty()) {
            throw ConfigError("ranker.model", "must be set for the api ranker");
        }
        cfg.api.timeout_s =
            get_or<double>(ranker, "timeout_s", 30.0, "ranker.timeout_s");
        if (!(cfg.api.timeout_s > 0.0)) {
            throw ConfigError("ranker.timeout_s", "must be > 0");
        }
        cfg.api.max_retries =
            get_or<int>(ranker, "max_retries", 2, "ranker.max_retries");
        if (cfg.api.max_retries < 0) {
            throw ConfigError("ranker.max_retries", "must be >= 0");
        }
        cfg.api.temperature =
            get_or<double>(ranker, "temperature", 0.0, "ranker.temperature");
        cfg.api.backoff_base_ms =
            get_or<int>(ranker, "backoff_base_ms", 1000, "ranker.backoff_base_ms");
        if (!std::getenv("CYCLEALIGN_API_KEY")) {
            throw ConfigError("CYCLEALIGN_API_KEY",
                              "environment variable must be set for the api ranker");
        }
    } else {
        throw ConfigError("ranker.type", "must be \"simulated\" or \"api\"");
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<config>", "cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("<config>", std::string("invalid JSON: ") + e.what());
    }
    return parse_experiment_config(j);
}

namespace {

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& overrides) {
    if (overrides.seeds) {
        if (overrides.seeds->empty()) {
            throw ConfigError("seeds", "must be non-empty");
        }
        cfg.seeds = *overrides.seeds;
        cfg.raw["seeds"] = cfg.seeds;
    }
    if (overrides.output_dir) {
        if (overrides.output_dir->empty()) {
            throw ConfigError("output_dir", "must be non-empty");
        }
        cfg.output_dir = *overrides.output_dir;
        cfg.raw["output_dir"] = cfg.output_dir;
    }
}

std::unique_ptr<Ranker> make_ranker(const ExperimentConfig& cfg,
                                    const Vocab& vocab) {
    if (cfg.ranker == RankerChoice::Simulated) {
        return std::make_unique<SimulatedRanker>(cfg.simulated, vocab);
    }
    return std::make_unique<ApiRanker>(cfg.api);
}

void write_metrics_csv(const fs::path& path,
                       const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "step,mean_hidden_reward,black_rank_exact_match,mean_kendall_tau,loss\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g\n",
                      r.step, r.mean_hidden_reward, r.black_rank_exact_match,
                      r.mean_kendall_tau, r.loss);
        out << line;
    }
}

void write_records_jsonl(const fs::path& path,
                         const std::vector<InteractionRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

void write_config_snapshot(const ExperimentConfig& cfg) {
    std::ofstream out(fs::path(cfg.output_dir) / "config.json");
    if (!out) throw std::runtime_error("cannot write config snapshot");
    out << cfg.raw.dump(2) << '\n';
}

struct SeedRun {
    TrainingResult result;
    ToyPolicy policy;
};

SeedRun run_one(const ExperimentConfig& cfg, std::uint64_t seed,
                const LoopConfig& loop, const Vocab& vocab) {
    SeedRun run{TrainingResult{}, ToyPolicy(cfg.vocab_size, cfg.response_length)};
    DemoBuffer buffer = make_demo_buffer(cfg.demo_capacity);
    auto ranker = make_ranker(cfg, vocab);
    LoopConfig seeded = loop;
    seeded.seed = seed;
    const SimulatedRankerConfig* oracle =
        cfg.ranker == RankerChoice::Simulated ? &cfg.simulated : nullptr;
    run.result = run_training(cfg.instructions, run.policy, *ranker, buffer,
                              seeded, cfg.steps, cfg.eval_interval, vocab,
                              oracle);
    return run;
}

void write_seed_artifacts(const fs::path& dir, const SeedRun& run) {
    fs::create_directories(dir);
    write_metrics_csv(dir / "metrics.csv", run.result.metrics);
    write_records_jsonl(dir / "interactions.jsonl", run.result.records);
    run.policy.save_checkpoint((dir / "policy.json").string());
}

}  // namespace

int cmd_train(const std::string& config_path, const CliOverrides& overrides) {
    ExperimentConfig cfg;
    try {
        cfg = load_experiment_config(config_path);
        apply_overrides(cfg, overrides);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    const Vocab vocab = default_vocab(cfg.vocab_size);
    try {
        fs::create_directories(cfg.output_dir);
        write_config_snapshot(cfg);
        for (std::uint64_t seed : cfg.seeds) {
            const SeedRun run = run_one(cfg, seed, cfg.loop, vocab);
            write_seed_artifacts(
                fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed)),
                run);
        }
    } catch (const RankerUnavailable& e) {
        std::cerr << "ranker unavailable: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const CliOverrides& overrides) {
    ExperimentConfig cfg;
    try {
        cfg = load_experiment_config(config_path);
        apply_overrides(cfg, overrides);
        if (cfg.ranker != RankerChoice::Simulated) {
            throw ConfigError("ranker.type",
                              "ablate needs the simulated ranker (hidden-reward oracle)");
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    const Vocab vocab = default_vocab(cfg.vocab_size);
    const Ablation modes[] = {Ablation::Full, Ablation::NoDynamic,
                              Ablation::NoIcl};
    try {
        fs::create_directories(cfg.output_dir);
        write_config_snapshot(cfg);
        std::ofstream csv(fs::path(cfg.output_dir) / "ablation.csv");
        csv << "mode,seed,final_mean_hidden_reward,mean_ranker_accuracy\n";
        for (std::uint64_t seed : cfg.seeds) {
            for (Ablation mode : modes) {
                LoopConfig loop = cfg.loop;
                loop.ablation = mode;
                const SeedRun run = run_one(cfg, seed, loop, vocab);
                write_seed_artifacts(fs::path(cfg.output_dir) /
                                         ablation_name(mode) /
                                         ("seed_" + std::to_string(seed)),
                                     run);
                char line[256];
                std::snprintf(line, sizeof(line), "%s,%llu,%.10g,%.10g\n",
                              ablation_name(mode).c_str(),
                              static_cast<unsigned long long>(seed),
                              run.result.metrics.back().mean_hidden_reward,
                              run.result.overall_exact_match);
                csv << line;
            }
        }
    } catch (const RankerUnavailable& e) {
        std::cerr << "ranker unavailable: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

int cmd_sweep_n(const std::string& config_path,
                const std::vector<int>& n_values,
                const CliOverrides& overrides) {
    ExperimentConfig cfg;
    std::vector<int> ns = n_values;
    try {
        cfg = load_experiment_config(config_path);
        apply_overrides(cfg, overrides);
        if (ns.empty()) ns = cfg.n_values;
        if (ns.empty()) throw ConfigError("n_values", "must be non-empty");
        for (int n : ns) {
            if (n < 1) throw ConfigError("n_values", "every entry must be >= 1");
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    const Vocab vocab = default_vocab(cfg.vocab_size);
    try {
        fs::create_directories(cfg.output_dir);
        write_config_snapshot(cfg);
        std::ofstream csv(fs::path(cfg.output_dir) / "sweep_n.csv");
        csv << "N,seed,final_mean_hidden_reward\n";
        for (int n : ns) {
            for (std::uint64_t seed : cfg.seeds) {  // same seeds across N
                LoopConfig loop = cfg.loop;
                loop.max_interactions = n;
                const SeedRun run = run_one(cfg, seed, loop, vocab);
                write_seed_artifacts(
                    fs::path(cfg.output_dir) / ("n_" + std::to_string(n)) /
                        ("seed_" + std::to_string(seed)),
                    run);
                char line[128];
                std::snprintf(line, sizeof(line), "%d,%llu,%.10g\n", n,
                              static_cast<unsigned long long>(seed),
                              run.result.metrics.back().mean_hidden_reward);
                csv << line;
            }
        }
    } catch (const RankerUnavailable& e) {
        std::cerr << "ranker unavailable: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

int cmd_inspect(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) {
        std::cerr << "inspect: cannot open " << log_path << '\n';
        return 4;
    }
    std::printf("%-8s %-12s %-12s %-20s %-11s %s\n", "step", "interactions",
                "exit", "agreement_lengths", "demos_added", "demos_total");

    struct StepSummary {
        int count = 0;
        bool consistent = false;
        std::vector<int> agreement_lengths;
        int demos_added = 0;
    };
    std::map<int, StepSummary> steps;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        InteractionRecord record;
        try {
            record = nlohmann::json::parse(line).get<InteractionRecord>();
        } catch (const std::exception& e) {
            std::cerr << "inspect: malformed line " << line_no << ": "
                      << e.what() << '\n';
            return 4;
        }
        auto& s = steps[record.step];
        ++s.count;
        s.consistent = s.consistent || record.early_exit;
        s.agreement_lengths.push_back(static_cast<int>(record.agreement.size()));
        if (record.agreement.size() >= 2) ++s.demos_added;
    }

    int demos_total = 0;
    for (const auto& [step, s] : steps) {
        demos_total += s.demos_added;
        std::string lengths;
        for (std::size_t i = 0; i < s.agreement_lengths.size(); ++i) {
            if (i > 0) lengths += ',';
            lengths += std::to_string(s.agreement_lengths[i]);
        }
        std::printf("%-8d %-12d %-12s %-20s %-11d %d\n", step, s.count,
                    s.consistent ? "consistent" : "max-n", lengths.c_str(),
                    s.demos_added, demos_total);
    }
    return 0;
}

}  // namespace cyclealign
