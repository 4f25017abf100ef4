#include "cyclealign/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cyclealign/agreement.hpp"

namespace cyclealign {

namespace {

void validate_loop_config(const LoopConfig& cfg) {
    if (cfg.max_interactions < 1) {
        throw std::invalid_argument("LoopConfig: max_interactions must be >= 1");
    }
    if (cfg.candidates < 2) {
        throw std::invalid_argument("LoopConfig: candidates must be >= 2");
    }
    if (!(cfg.learning_rate >= 0.0)) {
        throw std::invalid_argument("LoopConfig: learning_rate must be >= 0");
    }
    if (!(cfg.temperature > 0.0)) {
        throw std::invalid_argument("LoopConfig: temperature must be > 0");
    }
}

// Fit the black-box improved response to the policy's fixed length: truncate,
// or pad with the most probable token at each missing position.
Response fit_improved_response(const TokenSeq& tokens, const Instruction& x,
                               const ToyPolicy& policy, bool* adjusted) {
    const int L = policy.response_length();
    Response out;
    out.tokens = tokens;
    *adjusted = static_cast<int>(tokens.size()) != L;
    if (static_cast<int>(out.tokens.size()) > L) {
        out.tokens.resize(static_cast<std::size_t>(L));
    }
    if (static_cast<int>(out.tokens.size()) < L) {
        const Response greedy = policy.greedy_response(x);
        for (std::size_t t = out.tokens.size();
             t < static_cast<std::size_t>(L); ++t) {
            out.tokens.push_back(greedy.tokens[t]);
        }
    }
    return out;
}

// When rejection sampling collapses (the policy is effectively
// deterministic), complete the candidate set with the most probable
// sequences instead: the greedy response plus single-token flips of it,
// tried in descending logit order. Deterministic and always succeeds when
// the space holds k distinct sequences at all.
CandidateSet fallback_candidates(const Instruction& x, const ToyPolicy& policy,
                                 int k) {
    const int L = policy.response_length();
    const int V = policy.vocab_size();
    if (k > 1 + (V - 1) * L) {
        throw SamplingCollapse(
            "fallback_candidates: fewer than k distinct sequences exist");
    }
    CandidateSet out;
    out.instruction = x;
    const Response greedy = policy.greedy_response(x);
    std::set<TokenSeq> seen{greedy.tokens};
    out.responses.push_back(greedy);
    for (int t = L - 1; t >= 0 && static_cast<int>(out.responses.size()) < k;
         --t) {
        const auto row = policy.logits_at(x.id, t);
        std::vector<int> order(static_cast<std::size_t>(V));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return row[static_cast<std::size_t>(a)] >
                   row[static_cast<std::size_t>(b)];
        });
        for (int v : order) {
            if (static_cast<int>(out.responses.size()) >= k) break;
            TokenSeq tokens = greedy.tokens;
            tokens[static_cast<std::size_t>(t)] = static_cast<Token>(v);
            if (!seen.insert(tokens).second) continue;
            Response r;
            r.tokens = std::move(tokens);
            r.token_logprobs = policy.response_logprobs(x, r);
            out.responses.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace

StepResult run_step(const Instruction& x, ToyPolicy& policy, Ranker& ranker,
                    DemoBuffer& buffer, const LoopConfig& cfg, int step_index,
                    const Vocab& vocab, std::mt19937_64& rng,
                    const SimulatedRankerConfig* oracle) {
    return run_step(x, policy, ranker, buffer, cfg, step_index, vocab, rng,
                    oracle, nullptr);
}

StepResult run_step(const Instruction& x, ToyPolicy& policy, Ranker& ranker,
                    DemoBuffer& buffer, const LoopConfig& cfg, int step_index,
                    const Vocab& vocab, std::mt19937_64& rng,
                    const SimulatedRankerConfig* oracle,
                    std::vector<InteractionRecord>* log) {
    validate_loop_config(cfg);
    const int k = cfg.candidates;

    StepResult result;
    CandidateSet candidates;
    for (int iteration = 1; iteration <= cfg.max_interactions; ++iteration) {
        // (1) sample candidates, or re-score the previous ones under the
        // updated policy when resampling is disabled.
        if (iteration == 1 || cfg.resample_per_interaction) {
            try {
                candidates =
                    policy.sample_responses(x, k, cfg.temperature, rng());
            } catch (const SamplingCollapse&) {
                candidates = fallback_candidates(x, policy, k);
            }
        } else {
            for (auto& r : candidates.responses) {
                r.token_logprobs = policy.response_logprobs(x, r);
            }
        }

        // (2) dual rankings.
        std::vector<double> confidences;
        std::vector<std::string> texts;
        confidences.reserve(candidates.responses.size());
        texts.reserve(candidates.responses.size());
        for (const auto& r : candidates.responses) {
            confidences.push_back(length_normalized_score(*r.token_logprobs));
            texts.push_back(canonical_text(r, vocab));
        }
        const Ranking white = confidence_ranking(confidences);

        const bool include_static = cfg.ablation != Ablation::NoIcl;
        const bool include_dynamic = cfg.ablation == Ablation::Full;
        const std::string prompt = render_ranking_prompt(
            x, texts, buffer, include_static, include_dynamic);
        const int demo_count =
            (include_static ? 1 : 0) +
            (include_dynamic ? static_cast<int>(buffer.dynamic.size()) : 0);

        const RankerReply reply =
            ranker.rank(x, candidates, prompt, demo_count, rng());
        if (!validate_ranking(reply.ranking.order, k)) {
            throw std::runtime_error("run_step: ranker returned an invalid ranking");
        }
        const Ranking& black = reply.ranking;

        // (3) preference list and one gradient step. The improved response
        // leads the list as the SFT target when the ranker provided one.
        PreferenceList prefs;
        prefs.instruction = x;
        if (!reply.improved_response_text.empty()) {
            int dropped = 0;
            const TokenSeq improved_tokens =
                tokenize_text(reply.improved_response_text, vocab, &dropped);
            bool adjusted = false;
            Response improved = fit_improved_response(improved_tokens, x,
                                                      policy, &adjusted);
            improved.text = reply.improved_response_text;
            improved.token_logprobs = policy.response_logprobs(x, improved);
            prefs.responses.push_back(std::move(improved));
            prefs.sources.push_back(ResponseSource::BlackBoxWritten);
        }
        for (int idx : black.order) {
            prefs.responses.push_back(
                candidates.responses[static_cast<std::size_t>(idx)]);
            prefs.sources.push_back(ResponseSource::WhiteBoxSampled);
        }

        const LossBreakdown breakdown = combined_loss(cfg.objective, prefs);
        const Gradient grad = loss_gradient(cfg.objective, prefs, policy);
        if (cfg.learning_rate > 0.0) {
            policy.apply_gradient(grad, cfg.learning_rate);
        }

        // (4) agreement and demonstration feedback.
        const AgreementSubsequence agreement = lcs_agreement(black, white);
        if (cfg.ablation == Ablation::Full) {
            add_agreement_demo(buffer, x, texts, agreement);
        }

        // (5) consistency exit on this iteration's pre-update rankings.
        const bool match = ranking_exact_match(white, black);

        InteractionRecord record;
        record.step = step_index;
        record.iteration = iteration;
        record.white_ranking = white;
        record.black_ranking = black;
        record.agreement = agreement.indices;
        record.loss = breakdown;
        record.loss_value = breakdown.total;
        record.ranker_latency = reply.latency_ms;
        record.early_exit = match;
        record.raw_reply = reply.raw_reply;
        result.interactions.push_back(record);
        if (log) log->push_back(record);

        if (oracle) {
            const Ranking truth = oracle_ranking(*oracle, candidates);
            OracleCheck check;
            check.exact = ranking_exact_match(black, truth);
            check.tau = kendall_tau(black, truth);
            result.oracle_checks.push_back(check);
        }

        result.final_loss = breakdown.total;
        if (match) {
            result.consistent_exit = true;
            break;
        }
    }
    return result;
}

TrainingResult run_training(const std::vector<Instruction>& instructions,
                            ToyPolicy& policy, Ranker& ranker,
                            DemoBuffer& buffer, const LoopConfig& cfg,
                            int steps, int eval_interval, const Vocab& vocab,
                            const SimulatedRankerConfig* oracle) {
    if (instructions.empty()) {
        throw std::invalid_argument("run_training: no instructions");
    }
    if (steps < 1) throw std::invalid_argument("run_training: steps must be >= 1");
    if (eval_interval < 1) {
        throw std::invalid_argument("run_training: eval_interval must be >= 1");
    }

    std::mt19937_64 rng(cfg.seed);
    TrainingResult result;

    constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
    double loss_sum = 0.0;
    int loss_count = 0;
    double exact_sum = 0.0;
    double tau_sum = 0.0;
    int oracle_count = 0;
    double total_exact = 0.0;
    double total_tau = 0.0;
    int total_oracle = 0;

    for (int s = 0; s < steps; ++s) {
        const Instruction& x =
            instructions[static_cast<std::size_t>(s) % instructions.size()];
        const StepResult step = run_step(x, policy, ranker, buffer, cfg, s,
                                         vocab, rng, oracle, &result.records);
        result.interactions_per_step.push_back(
            static_cast<int>(step.interactions.size()));
        result.consistent_exit_per_step.push_back(step.consistent_exit);

        loss_sum += step.final_loss;
        ++loss_count;
        for (const auto& check : step.oracle_checks) {
            exact_sum += check.exact ? 1.0 : 0.0;
            tau_sum += check.tau;
            ++oracle_count;
            total_exact += check.exact ? 1.0 : 0.0;
            total_tau += check.tau;
            ++total_oracle;
        }

        if ((s + 1) % eval_interval == 0 || s + 1 == steps) {
            MetricsRow row;
            row.step = s + 1;
            row.loss = loss_count > 0 ? loss_sum / loss_count : kNaN;
            if (oracle) {
                double reward_sum = 0.0;
                for (const auto& inst : instructions) {
                    reward_sum += hidden_reward(*oracle, inst,
                                                policy.greedy_response(inst));
                }
                row.mean_hidden_reward =
                    reward_sum / static_cast<double>(instructions.size());
                row.black_rank_exact_match =
                    oracle_count > 0 ? exact_sum / oracle_count : kNaN;
                row.mean_kendall_tau =
                    oracle_count > 0 ? tau_sum / oracle_count : kNaN;
            } else {
                row.mean_hidden_reward = kNaN;
                row.black_rank_exact_match = kNaN;
                row.mean_kendall_tau = kNaN;
            }
            result.metrics.push_back(row);
            loss_sum = 0.0;
            loss_count = 0;
            exact_sum = 0.0;
            tau_sum = 0.0;
            oracle_count = 0;
        }
    }
    result.overall_exact_match =
        total_oracle > 0 ? total_exact / total_oracle : kNaN;
    result.overall_mean_tau = total_oracle > 0 ? total_tau / total_oracle : kNaN;
    return result;
}

}  // namespace cyclealign
