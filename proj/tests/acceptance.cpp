// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line; the
// exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cyclealign/agreement.hpp"
#include "cyclealign/assets.hpp"
#include "cyclealign/losses.hpp"
#include "cyclealign/orchestrator.hpp"
#include "cyclealign/policy.hpp"
#include "cyclealign/prompting.hpp"
#include "cyclealign/ranker.hpp"

using namespace cyclealign;

namespace {

int g_failures = 0;

void report(int index, const char* name, bool ok, double seconds,
            double budget_s) {
    const bool in_budget = seconds < budget_s;
    if (!ok || !in_budget) ++g_failures;
    std::printf("criterion %d (%s): %s (%.2f s%s)\n", index, name,
                ok && in_budget ? "PASS" : "FAIL", seconds,
                in_budget ? "" : ", over budget");
    std::fflush(stdout);
}

class Timer {
  public:
    double seconds() const {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_ =
        std::chrono::steady_clock::now();
};

const Instruction kX{"x0", "Human: toy\nAssistant:"};

// ---------------------------------------------------------------- criterion 1

bool constant_fidelity() {
    ToyPolicy policy(4, 2);
    PreferenceList prefs;
    prefs.instruction = kX;
    for (Token v : {0, 1, 2}) {
        Response r;
        r.tokens = {v, v};
        r.token_logprobs = policy.response_logprobs(kX, r);
        prefs.responses.push_back(std::move(r));
        prefs.sources.push_back(ResponseSource::WhiteBoxSampled);
    }
    const LossBreakdown b = combined_loss(RankObjectiveKind::PRO, prefs);
    bool ok = b.lambda == 4.0;
    ok = ok && b.total == b.rank_loss + 4.0 * b.sft_loss;
    ok = ok && LoopConfig{}.max_interactions == 5;

    const std::string rendered = render_demo_block(static_demonstration());
    ok = ok && rendered + "\n" == std::string(assets::kStaticDemo);
    ok = ok && rendered.find("The desired ranking is: [1, 3, 2, 0].") !=
                   std::string::npos;
    return ok;
}

// ---------------------------------------------------------------- criterion 2

struct GradInstance {
    ToyPolicy policy;
    PreferenceList prefs;
};

GradInstance random_instance(std::mt19937_64& rng, bool exclude_kinks) {
    constexpr int V = 8, L = 4, k = 3;
    for (;;) {
        GradInstance inst{ToyPolicy(V, L), PreferenceList{}};
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int t = 0; t < L; ++t) {
            for (int v = 0; v < V; ++v) {
                inst.policy.perturb_logit(kX.id, t, v, gauss(rng));
            }
        }
        inst.prefs.instruction = kX;
        Response target;
        for (int t = 0; t < L; ++t) {
            target.tokens.push_back(static_cast<Token>(rng() % V));
        }
        target.token_logprobs = inst.policy.response_logprobs(kX, target);
        inst.prefs.responses.push_back(std::move(target));
        inst.prefs.sources.push_back(ResponseSource::BlackBoxWritten);
        const CandidateSet cands =
            inst.policy.sample_responses(kX, k, 1.0, rng());
        for (const auto& r : cands.responses) {
            inst.prefs.responses.push_back(r);
            inst.prefs.sources.push_back(ResponseSource::WhiteBoxSampled);
        }

        if (exclude_kinks) {
            std::vector<double> scores;
            for (const auto& r : inst.prefs.responses) {
                scores.push_back(length_normalized_score(*r.token_logprobs));
            }
            double min_gap = 1e9;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                for (std::size_t j = i + 1; j < scores.size(); ++j) {
                    min_gap = std::min(min_gap,
                                       std::fabs(scores[i] - scores[j]));
                }
            }
            if (min_gap < 1e-3) continue;  // too close to a hinge kink
        }
        return inst;
    }
}

bool gradient_correctness() {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        for (auto kind : {RankObjectiveKind::PRO, RankObjectiveKind::RRHF}) {
            const GradInstance inst =
                random_instance(rng, kind == RankObjectiveKind::RRHF);
            worst = std::max(worst, finite_difference_check(
                                        kind, inst.prefs, inst.policy, 1e-5));
        }
    }
    std::printf("  max finite-difference relative error: %.3g\n", worst);
    return worst < 1e-5;
}

// ---------------------------------------------------------------- criterion 3

bool is_subsequence(const std::vector<int>& sub, const std::vector<int>& seq) {
    std::size_t i = 0;
    for (int v : seq) {
        if (i < sub.size() && sub[i] == v) ++i;
    }
    return i == sub.size();
}

std::vector<int> brute_force_lcs(const Ranking& black, const Ranking& white) {
    const int k = static_cast<int>(black.order.size());
    std::vector<int> best;
    std::vector<int> best_positions;
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
        std::vector<int> sub;
        std::vector<int> positions;
        for (int i = 0; i < k; ++i) {
            if (mask & (1u << i)) {
                sub.push_back(black.order[static_cast<std::size_t>(i)]);
                positions.push_back(i);
            }
        }
        if (!is_subsequence(sub, white.order)) continue;
        if (sub.size() > best.size() ||
            (sub.size() == best.size() && positions < best_positions)) {
            best = sub;
            best_positions = positions;
        }
    }
    return best;
}

Ranking random_ranking(int k, std::mt19937_64& rng) {
    Ranking r;
    r.order.resize(static_cast<std::size_t>(k));
    std::iota(r.order.begin(), r.order.end(), 0);
    std::shuffle(r.order.begin(), r.order.end(), rng);
    return r;
}

bool lcs_oracle_equivalence() {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 6);
        const Ranking black = random_ranking(k, rng);
        const Ranking white = random_ranking(k, rng);
        if (lcs_agreement(black, white).indices !=
            brute_force_lcs(black, white)) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 4

bool loss_closed_forms() {
    bool ok = true;
    for (int n = 2; n <= 6; ++n) {
        const std::vector<double> equal(static_cast<std::size_t>(n), -0.37);
        double log_fact = 0.0;
        for (int i = 2; i <= n; ++i) log_fact += std::log(i);
        ok = ok && std::fabs(pro_rank_loss(equal) - log_fact) < 1e-9;
    }

    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 5);
        std::vector<double> scores(static_cast<std::size_t>(n));
        for (auto& s : scores) s = gauss(rng);
        std::sort(scores.begin(), scores.end(), std::greater<>());
        ok = ok && rrhf_rank_loss(scores) == 0.0;

        std::vector<double> shuffled = scores;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        std::vector<double> shifted = shuffled;
        for (auto& s : shifted) s += 2.5;
        ok = ok && std::fabs(rrhf_rank_loss(shuffled) -
                             rrhf_rank_loss(shifted)) < 1e-9;
        ok = ok && std::fabs(pro_rank_loss(shuffled) -
                             pro_rank_loss(shifted)) < 1e-9;
    }
    return ok;
}

// ------------------------------------------------------------ criteria 5 to 7

struct LoopAudit {
    int max_interactions = 0;
    bool discipline_ok = true;
};

void audit(const TrainingResult& result, LoopAudit& a) {
    std::size_t idx = 0;
    for (std::size_t s = 0; s < result.interactions_per_step.size(); ++s) {
        const int count = result.interactions_per_step[s];
        a.max_interactions = std::max(a.max_interactions, count);
        if (idx >= result.records.size()) {
            a.discipline_ok = false;
            return;
        }
        const InteractionRecord& first = result.records[idx];
        if (first.iteration != 1) a.discipline_ok = false;
        if (first.early_exit &&
            (count != 1 || !result.consistent_exit_per_step[s])) {
            a.discipline_ok = false;
        }
        idx += static_cast<std::size_t>(count);
    }
    if (idx != result.records.size()) a.discipline_ok = false;
}

SimulatedRankerConfig standard_simulator(int vocab_size, int length,
                                         double epsilon0) {
    SimulatedRankerConfig cfg;
    cfg.epsilon0 = epsilon0;
    cfg.rho = 0.7;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    cfg.reward_weights.resize(static_cast<std::size_t>(vocab_size));
    for (double& w : cfg.reward_weights) w = gauss(rng);
    const int best = static_cast<int>(
        std::max_element(cfg.reward_weights.begin(), cfg.reward_weights.end()) -
        cfg.reward_weights.begin());
    cfg.gold_responses[kX.id] = TokenSeq(static_cast<std::size_t>(length), best);
    return cfg;
}

TrainingResult standard_run(const SimulatedRankerConfig& sim, int vocab_size,
                            int length, const LoopConfig& loop, int steps,
                            ToyPolicy& policy) {
    const Vocab vocab = default_vocab(vocab_size);
    SimulatedRanker ranker(sim, vocab);
    DemoBuffer buffer = make_demo_buffer();
    return run_training({kX}, policy, ranker, buffer, loop, steps,
                        std::max(1, steps / 10), vocab, &sim);
}

bool alignment_trend(LoopAudit& a) {
    // Part 1: noisy ranker, reward of the greedy response improves for almost
    // every seed.
    const auto sim = standard_simulator(16, 4, 0.3);
    int improved = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ToyPolicy policy(16, 4);
        const double initial = hidden_reward(sim, kX, policy.greedy_response(kX));
        LoopConfig loop;
        loop.candidates = 3;
        loop.objective = RankObjectiveKind::PRO;
        loop.seed = seed;
        const TrainingResult result =
            standard_run(sim, 16, 4, loop, 1000, policy);
        audit(result, a);
        const double final_reward =
            hidden_reward(sim, kX, policy.greedy_response(kX));
        if (final_reward > initial) ++improved;
    }
    std::printf("  reward improved in %d/10 seeds\n", improved);

    // Part 2: noise-free ranker reaches the enumerated optimum.
    const auto exact = standard_simulator(4, 2, 0.0);
    double best = -1e18;
    for (Token u = 0; u < 4; ++u) {
        for (Token v = 0; v < 4; ++v) {
            Response r;
            r.tokens = {u, v};
            best = std::max(best, hidden_reward(exact, kX, r));
        }
    }
    ToyPolicy policy(4, 2);
    LoopConfig loop;
    loop.candidates = 3;
    loop.seed = 1;
    const TrainingResult result = standard_run(exact, 4, 2, loop, 200, policy);
    audit(result, a);
    const double reached = hidden_reward(exact, kX, policy.greedy_response(kX));
    std::printf("  exact-ranker greedy reward %.4f vs optimum %.4f\n", reached,
                best);
    return improved >= 9 && reached == best;
}

bool ablation_ordering(LoopAudit& a) {
    const auto sim = standard_simulator(16, 4, 0.3);
    double mean_acc[3] = {0.0, 0.0, 0.0};
    const Ablation modes[3] = {Ablation::Full, Ablation::NoDynamic,
                               Ablation::NoIcl};
    for (int m = 0; m < 3; ++m) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            ToyPolicy policy(16, 4);
            LoopConfig loop;
            loop.candidates = 3;
            loop.seed = seed;
            loop.ablation = modes[m];
            const TrainingResult result =
                standard_run(sim, 16, 4, loop, 1000, policy);
            audit(result, a);
            mean_acc[m] += result.overall_exact_match / 10.0;
        }
    }
    std::printf("  exact-match accuracy: full %.4f, no_dynamic %.4f, "
                "no_icl %.4f\n",
                mean_acc[0], mean_acc[1], mean_acc[2]);
    return mean_acc[0] >= mean_acc[1] - 0.01 && mean_acc[1] >= mean_acc[2] - 0.01;
}

// ---------------------------------------------------------------- criterion 8

bool parser_robustness() {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 4);
        std::vector<int> order(static_cast<std::size_t>(k));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::string body = "[";
        for (int i = 0; i < k; ++i) {
            if (i > 0) body += ", ";
            body += std::to_string(order[static_cast<std::size_t>(i)]);
        }
        body += "]";
        const std::string rendered = "The desired ranking is: " + body + ".";
        try {
            if (parse_ranking_reply(rendered, k).ranking.order != order) {
                return false;
            }
        } catch (const ParseFailure&) {
            return false;
        }

        // Mutate into one of three invalid shapes.
        std::string mutated = rendered;
        const auto open = mutated.find('[');
        switch (trial % 3) {
            case 0:  // duplicate the first index
                mutated.replace(
                    open + 1, mutated.find_first_of(",]", open) - open - 1,
                    std::to_string(order[1]));
                break;
            case 1:  // out-of-range index
                mutated.replace(
                    open + 1, mutated.find_first_of(",]", open) - open - 1,
                    std::to_string(k));
                break;
            case 2:  // drop the closing bracket
                mutated.erase(mutated.find(']'), 1);
                break;
        }
        try {
            parse_ranking_reply(mutated, k);
            return false;
        } catch (const ParseFailure&) {
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 9

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

bool persistence_round_trips() {
    const auto dir =
        std::filesystem::temp_directory_path() / "cyclealign_acceptance";
    std::filesystem::create_directories(dir);

    ToyPolicy policy(6, 3);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int t = 0; t < 3; ++t) {
        for (int v = 0; v < 6; ++v) policy.perturb_logit(kX.id, t, v, gauss(rng));
    }
    policy.save_checkpoint((dir / "p1.json").string());
    ToyPolicy::load_checkpoint((dir / "p1.json").string())
        .save_checkpoint((dir / "p2.json").string());
    bool ok = slurp(dir / "p1.json") == slurp(dir / "p2.json");

    DemoBuffer buffer = make_demo_buffer(4);
    add_agreement_demo(buffer, kX, {"alpha", "beta", "gamma"},
                       AgreementSubsequence{{2, 0}});
    add_agreement_demo(buffer, kX, {"alpha", "beta", "gamma"},
                       AgreementSubsequence{{0, 1, 2}});
    save_buffer(buffer, dir / "b1.jsonl");
    save_buffer(load_buffer(dir / "b1.jsonl"), dir / "b2.jsonl");
    ok = ok && slurp(dir / "b1.jsonl") == slurp(dir / "b2.jsonl");
    return ok;
}

}  // namespace

int main() {
    {
        Timer t;
        const bool ok = constant_fidelity();
        report(1, "constant fidelity", ok, t.seconds(), 1.0);
    }
    {
        Timer t;
        const bool ok = gradient_correctness();
        report(2, "gradient correctness", ok, t.seconds(), 60.0);
    }
    {
        Timer t;
        const bool ok = lcs_oracle_equivalence();
        report(3, "LCS oracle equivalence", ok, t.seconds(), 30.0);
    }
    {
        Timer t;
        const bool ok = loss_closed_forms();
        report(4, "loss closed forms", ok, t.seconds(), 30.0);
    }
    LoopAudit a;
    {
        Timer t;
        const bool ok = alignment_trend(a);
        report(5, "full-loop alignment trend", ok, t.seconds(), 300.0);
    }
    {
        Timer t;
        const bool ok = ablation_ordering(a);
        report(6, "ablation ordering", ok, t.seconds(), 600.0);
    }
    {
        Timer t;
        const bool ok = a.discipline_ok && a.max_interactions <= 5;
        report(7, "loop discipline", ok, t.seconds(), 30.0);
    }
    {
        Timer t;
        const bool ok = parser_robustness();
        report(8, "parser robustness", ok, t.seconds(), 30.0);
    }
    {
        Timer t;
        const bool ok = persistence_round_trips();
        report(9, "persistence round trips", ok, t.seconds(), 30.0);
    }
    return g_failures;
}
