#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "cyclealign/orchestrator.hpp"

using namespace cyclealign;

namespace {

const Instruction kX{"x0", "Human: toy\nAssistant:"};

constexpr const char* kDemoMarker = "### The desired ranking is:";

int count_occurrences(const std::string& haystack, const std::string& needle) {
    int count = 0;
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

// Wraps the simulated ranker and records every prompt / demo count.
class SpyRanker : public Ranker {
  public:
    SpyRanker(SimulatedRankerConfig cfg, Vocab vocab)
        : inner_(std::move(cfg), std::move(vocab)) {}

    RankerReply rank(const Instruction& x, const CandidateSet& candidates,
                     const std::string& prompt, int demo_count,
                     std::uint64_t seed) override {
        prompts.push_back(prompt);
        demo_counts.push_back(demo_count);
        return inner_.rank(x, candidates, prompt, demo_count, seed);
    }

    std::vector<std::string> prompts;
    std::vector<int> demo_counts;

  private:
    SimulatedRanker inner_;
};

// Fails after a fixed number of successful calls.
class FlakyRanker : public Ranker {
  public:
    FlakyRanker(SimulatedRankerConfig cfg, Vocab vocab, int fail_after)
        : inner_(std::move(cfg), std::move(vocab)), fail_after_(fail_after) {}

    RankerReply rank(const Instruction& x, const CandidateSet& candidates,
                     const std::string& prompt, int demo_count,
                     std::uint64_t seed) override {
        if (calls_++ >= fail_after_) {
            throw RankerUnavailable("flaky ranker down", "raw");
        }
        return inner_.rank(x, candidates, prompt, demo_count, seed);
    }

  private:
    SimulatedRanker inner_;
    int fail_after_;
    int calls_ = 0;
};

SimulatedRankerConfig toy_oracle(int vocab_size, int length) {
    SimulatedRankerConfig cfg;
    cfg.epsilon0 = 0.0;
    cfg.reward_weights.assign(static_cast<std::size_t>(vocab_size), 0.0);
    cfg.reward_weights.back() = 1.0;
    cfg.gold_responses[kX.id] =
        TokenSeq(static_cast<std::size_t>(length), vocab_size - 1);
    return cfg;
}

LoopConfig toy_loop() {
    LoopConfig cfg;
    cfg.candidates = 2;
    cfg.learning_rate = 0.05;
    return cfg;
}

}  // namespace

TEST_CASE("consistent rankings exit after exactly one interaction") {
    // Policy strongly favors the gold token, so the confidence ranking agrees
    // with the noise-free oracle immediately.
    ToyPolicy policy(2, 1);
    policy.perturb_logit(kX.id, 0, 1, 4.0);
    const auto oracle = toy_oracle(2, 1);
    SimulatedRanker ranker(oracle, default_vocab(2));
    DemoBuffer buffer = make_demo_buffer();
    std::mt19937_64 rng(1);

    const auto result =
        run_step(kX, policy, ranker, buffer, toy_loop(), 0, default_vocab(2),
                 rng, &oracle);
    CHECK(result.interactions.size() == 1);
    CHECK(result.consistent_exit);
    CHECK(result.interactions.front().early_exit);
    CHECK(result.oracle_checks.front().exact);
}

TEST_CASE("a disagreeing ranker runs all N interactions") {
    ToyPolicy policy(2, 1);
    policy.perturb_logit(kX.id, 0, 1, 4.0);
    auto oracle = toy_oracle(2, 1);
    oracle.epsilon0 = 1.0;  // always swap: black is always the reversed oracle
    oracle.rho = 1.0;
    SimulatedRanker ranker(oracle, default_vocab(2));
    DemoBuffer buffer = make_demo_buffer();
    std::mt19937_64 rng(1);
    LoopConfig cfg = toy_loop();
    cfg.learning_rate = 1e-6;  // keep the white ranking stable

    const auto result = run_step(kX, policy, ranker, buffer, cfg, 0,
                                 default_vocab(2), rng);
    CHECK(static_cast<int>(result.interactions.size()) == cfg.max_interactions);
    CHECK_FALSE(result.consistent_exit);
    for (const auto& rec : result.interactions) CHECK_FALSE(rec.early_exit);
    CHECK(result.interactions.back().iteration == cfg.max_interactions);
}

TEST_CASE("ablation flags control demonstrations") {
    const Vocab vocab = default_vocab(4);
    auto oracle = toy_oracle(4, 2);
    oracle.epsilon0 = 1.0;  // force disagreement so every iteration runs
    oracle.rho = 1.0;

    for (auto mode : {Ablation::Full, Ablation::NoDynamic, Ablation::NoIcl}) {
        ToyPolicy policy(4, 2);
        SpyRanker spy(oracle, vocab);
        DemoBuffer buffer = make_demo_buffer();
        std::mt19937_64 rng(7);
        LoopConfig cfg = toy_loop();
        cfg.candidates = 3;
        cfg.ablation = mode;

        run_step(kX, policy, spy, buffer, cfg, 0, vocab, rng);
        run_step(kX, policy, spy, buffer, cfg, 1, vocab, rng);
        REQUIRE(!spy.prompts.empty());

        if (mode == Ablation::NoIcl) {
            for (const auto& p : spy.prompts) {
                CHECK(count_occurrences(p, kDemoMarker) == 0);
            }
            for (int d : spy.demo_counts) CHECK(d == 0);
            CHECK(buffer.dynamic.empty());
        } else if (mode == Ablation::NoDynamic) {
            for (const auto& p : spy.prompts) {
                CHECK(count_occurrences(p, kDemoMarker) == 1);
            }
            for (int d : spy.demo_counts) CHECK(d == 1);
            CHECK(buffer.dynamic.empty());
        } else {
            // demo_count covers the static demo plus accumulated dynamic ones.
            CHECK(count_occurrences(spy.prompts.front(), kDemoMarker) == 1);
            for (std::size_t i = 0; i < spy.prompts.size(); ++i) {
                CHECK(count_occurrences(spy.prompts[i], kDemoMarker) ==
                      spy.demo_counts[i]);
                CHECK(spy.demo_counts[i] >= 1);
            }
        }
    }
}

TEST_CASE("zero learning rate leaves the greedy response unchanged") {
    const Vocab vocab = default_vocab(4);
    const auto oracle = toy_oracle(4, 2);
    ToyPolicy policy(4, 2);
    const auto before = policy.greedy_response(kX).tokens;

    SimulatedRanker ranker(oracle, vocab);
    DemoBuffer buffer = make_demo_buffer();
    LoopConfig cfg = toy_loop();
    cfg.learning_rate = 0.0;
    run_training({kX}, policy, ranker, buffer, cfg, 20, 5, vocab, &oracle);
    CHECK(policy.greedy_response(kX).tokens == before);
    CHECK(policy.version() == 0);
}

TEST_CASE("same seed and config give identical traces") {
    const Vocab vocab = default_vocab(6);
    auto oracle = toy_oracle(6, 3);
    oracle.epsilon0 = 0.3;

    auto run = [&] {
        ToyPolicy policy(6, 3);
        SimulatedRanker ranker(oracle, vocab);
        DemoBuffer buffer = make_demo_buffer();
        LoopConfig cfg = toy_loop();
        cfg.candidates = 3;
        cfg.seed = 99;
        return run_training({kX}, policy, ranker, buffer, cfg, 30, 10, vocab,
                            &oracle);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        CHECK(a.metrics[i].step == b.metrics[i].step);
        CHECK(a.metrics[i].mean_hidden_reward == b.metrics[i].mean_hidden_reward);
        CHECK(a.metrics[i].loss == b.metrics[i].loss);
    }
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].black_ranking == b.records[i].black_ranking);
        CHECK(a.records[i].white_ranking == b.records[i].white_ranking);
        CHECK(a.records[i].loss_value == b.records[i].loss_value);
    }
}

TEST_CASE("ranker failure aborts the step but keeps partial logs") {
    const Vocab vocab = default_vocab(4);
    auto oracle = toy_oracle(4, 2);
    oracle.epsilon0 = 1.0;  // keep iterating
    oracle.rho = 1.0;
    ToyPolicy policy(4, 2);
    // Bias the policy toward the gold token so the white ranking tracks the
    // oracle exactly; the always-swapped black ranking then never matches it.
    policy.perturb_logit(kX.id, 0, 3, 6.0);
    policy.perturb_logit(kX.id, 1, 3, 6.0);
    FlakyRanker ranker(oracle, vocab, 2);
    DemoBuffer buffer = make_demo_buffer();
    std::mt19937_64 rng(1);
    LoopConfig cfg = toy_loop();
    cfg.learning_rate = 1e-6;

    std::vector<InteractionRecord> log;
    CHECK_THROWS_AS(run_step(kX, policy, ranker, buffer, cfg, 0, vocab, rng,
                             nullptr, &log),
                    RankerUnavailable);
    CHECK(log.size() == 2);
}

TEST_CASE("full loop drives the greedy response to the gold optimum") {
    const Vocab vocab = default_vocab(4);
    const auto oracle = toy_oracle(4, 2);
    ToyPolicy policy(4, 2);
    SimulatedRanker ranker(oracle, vocab);
    DemoBuffer buffer = make_demo_buffer();
    LoopConfig cfg = toy_loop();
    cfg.candidates = 3;
    cfg.seed = 4;

    const double before =
        hidden_reward(oracle, kX, policy.greedy_response(kX));
    run_training({kX}, policy, ranker, buffer, cfg, 200, 50, vocab, &oracle);
    const double after = hidden_reward(oracle, kX, policy.greedy_response(kX));
    CHECK(after > before);
    CHECK(policy.greedy_response(kX).tokens == oracle.gold_responses.at(kX.id));
}

TEST_CASE("invalid loop configs are rejected") {
    const Vocab vocab = default_vocab(4);
    ToyPolicy policy(4, 2);
    SimulatedRanker ranker(toy_oracle(4, 2), vocab);
    DemoBuffer buffer = make_demo_buffer();
    std::mt19937_64 rng(1);

    LoopConfig bad = toy_loop();
    bad.candidates = 1;
    CHECK_THROWS_AS(
        run_step(kX, policy, ranker, buffer, bad, 0, vocab, rng),
        std::invalid_argument);
    bad = toy_loop();
    bad.max_interactions = 0;
    CHECK_THROWS_AS(
        run_step(kX, policy, ranker, buffer, bad, 0, vocab, rng),
        std::invalid_argument);
}
