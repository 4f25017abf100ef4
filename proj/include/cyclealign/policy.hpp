#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclealign/types.hpp"

namespace cyclealign {

// Thrown when rejection sampling cannot find enough distinct sequences
// because the distribution has become (nearly) deterministic.
struct SamplingCollapse : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gradient with respect to ToyPolicy logits. Dense per touched instruction,
// row-major [position][token].
struct Gradient {
    std::map<std::string, std::vector<double>> by_instruction;
    std::int64_t version_of_policy = 0;
};

// Tabular position-factorized policy: one logit row per (instruction,
// position), softmax over the vocabulary. The distribution at position t does
// not depend on earlier sampled tokens, so every gradient of the training
// objective is exactly computable.
class ToyPolicy {
  public:
    ToyPolicy(int vocab_size, int response_length);

    int vocab_size() const { return vocab_size_; }
    int response_length() const { return response_length_; }
    std::int64_t version() const { return version_; }

    // Per-token log-probabilities of y under the current logits.
    // Throws std::invalid_argument when |y| != L or a token is out of range.
    std::vector<double> response_logprobs(const Instruction& x,
                                          const Response& y) const;

    // k pairwise-distinct responses sampled position-wise from the tempered
    // softmax; cached token_logprobs use the untempered distribution.
    // Throws std::runtime_error when k distinct sequences cannot be found
    // within 100*k draws.
    CandidateSet sample_responses(const Instruction& x, int k,
                                  double temperature, std::uint64_t seed);

    // logits <- logits - lr * grad; bumps the version.
    // Throws std::invalid_argument on version mismatch or lr <= 0.
    void apply_gradient(const Gradient& grad, double learning_rate);

    // Argmax token per position, ties to the lowest token id.
    Response greedy_response(const Instruction& x) const;

    // Logit row for (instruction, position); materializes zero-initialized
    // rows on first touch.
    std::span<const double> logits_at(const std::string& instruction_id,
                                      int position) const;

    // Direct logit nudge for numerical differentiation; does not bump the
    // version and must not be used by training code.
    void perturb_logit(const std::string& instruction_id, int position,
                       Token token, double delta);

    std::vector<std::string> instruction_ids() const;

    nlohmann::json to_checkpoint() const;
    static ToyPolicy from_checkpoint(const nlohmann::json& j);

    void save_checkpoint(const std::string& path) const;
    static ToyPolicy load_checkpoint(const std::string& path);

  private:
    std::vector<double>& slot(const std::string& instruction_id);
    const std::vector<double>& slot(const std::string& instruction_id) const;

    int vocab_size_;
    int response_length_;
    std::int64_t version_ = 0;
    // instruction id -> L*V logits, row-major by position.
    mutable std::map<std::string, std::vector<double>> logits_;
};

// log softmax over one logit row.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

}  // namespace cyclealign
