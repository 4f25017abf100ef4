#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclealign/types.hpp"

namespace cyclealign {

struct RankerReply {
    Ranking ranking;
    std::string improved_response_text;
    std::string raw_reply;
    int demos_used = 0;
    double latency_ms = 0.0;
};

struct SimulatedRankerConfig {
    double epsilon0 = 0.3;  // base adjacent-swap probability
    double rho = 0.7;       // per-demonstration decay, in (0, 1]
    std::vector<double> reward_weights;  // one weight per token id
    std::map<std::string, TokenSeq> gold_responses;  // instruction id -> tokens
};

struct ApiRankerConfig {
    std::string endpoint;  // full URL, e.g. http://host:port/v1/chat/completions
    std::string model;
    double timeout_s = 30.0;
    int max_retries = 2;
    double temperature = 0.0;
    int backoff_base_ms = 1000;  // doubled per retry
};

struct ParseFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RankerUnavailable : std::runtime_error {
    RankerUnavailable(const std::string& msg, std::string last_raw_reply)
        : std::runtime_error(msg), last_raw(std::move(last_raw_reply)) {}

    std::string last_raw;
};

// Ground-truth preference score: dot product of reward_weights with the
// token-count feature vector of y.
double hidden_reward(const SimulatedRankerConfig& config, const Instruction& x,
                     const Response& y);

// Sort by hidden_reward descending, ties by ascending index.
Ranking oracle_ranking(const SimulatedRankerConfig& config,
                       const CandidateSet& candidates);

// Oracle ranking with one left-to-right pass of independent adjacent swaps,
// each with probability epsilon0 * rho^demo_count. The improved response is
// the per-instruction gold sequence rendered through the vocab.
RankerReply simulated_rank(const SimulatedRankerConfig& config,
                           const Instruction& x, const CandidateSet& candidates,
                           int demo_count, std::uint64_t seed,
                           const Vocab& vocab);

struct ParsedReply {
    Ranking ranking;
    std::string improved_response_text;
};

// Scans for the last bracketed integer list of length k that is a valid
// permutation; the improved response is the text after a "better response"
// marker when present. Throws ParseFailure when no valid list exists.
ParsedReply parse_ranking_reply(const std::string& text, int k);

// Single-turn chat-completion call with retries (exponential backoff, factor
// 2). Reads the API key from CYCLEALIGN_API_KEY. Throws RankerUnavailable
// once 1 + max_retries attempts are exhausted.
RankerReply api_rank(const ApiRankerConfig& config,
                     const std::string& prompt_text, int k);

// Abstract black-box side used by the orchestrator.
class Ranker {
  public:
    virtual ~Ranker() = default;
    virtual RankerReply rank(const Instruction& x,
                             const CandidateSet& candidates,
                             const std::string& prompt, int demo_count,
                             std::uint64_t seed) = 0;
};

class SimulatedRanker : public Ranker {
  public:
    SimulatedRanker(SimulatedRankerConfig config, Vocab vocab)
        : config_(std::move(config)), vocab_(std::move(vocab)) {}

    RankerReply rank(const Instruction& x, const CandidateSet& candidates,
                     const std::string& prompt, int demo_count,
                     std::uint64_t seed) override;

    const SimulatedRankerConfig& config() const { return config_; }

  private:
    SimulatedRankerConfig config_;
    Vocab vocab_;
};

class ApiRanker : public Ranker {
  public:
    explicit ApiRanker(ApiRankerConfig config) : config_(std::move(config)) {}

    RankerReply rank(const Instruction& x, const CandidateSet& candidates,
                     const std::string& prompt, int demo_count,
                     std::uint64_t seed) override;

  private:
    ApiRankerConfig config_;
};

}  // namespace cyclealign
