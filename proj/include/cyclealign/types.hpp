#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cyclealign {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

// Token id -> rendered word. Index is the token id.
using Vocab = std::vector<std::string>;

Vocab default_vocab(int vocab_size);

struct Instruction {
    std::string id;
    std::string text;  // dialogue context, ends with "Assistant:"
};

struct Response {
    TokenSeq tokens;
    std::optional<std::vector<double>> token_logprobs;  // natural log, <= 0
    std::optional<std::string> text;

    bool operator==(const Response& other) const { return tokens == other.tokens; }
};

struct CandidateSet {
    Instruction instruction;
    std::vector<Response> responses;  // k >= 2, pairwise distinct token sequences
};

struct Ranking {
    std::vector<int> order;  // best-first permutation of {0..k-1}

    bool operator==(const Ranking&) const = default;
};

enum class ResponseSource { BlackBoxWritten, WhiteBoxSampled };

struct PreferenceList {
    Instruction instruction;
    std::vector<Response> responses;  // best-first, index 0 is the SFT target
    std::vector<ResponseSource> sources;  // one per response
};

struct Demonstration {
    enum class Origin { Static, Dynamic };

    std::string instruction_text;
    std::vector<std::string> response_texts;
    Ranking desired_ranking;
    Origin origin = Origin::Dynamic;
};

struct LossBreakdown {
    double rank_loss = 0.0;
    double sft_loss = 0.0;
    double lambda = 0.0;
    double total = 0.0;  // rank_loss + lambda * sft_loss
};

struct InteractionRecord {
    int step = 0;
    int iteration = 0;  // 1-based, <= N
    Ranking white_ranking;
    Ranking black_ranking;
    std::vector<int> agreement;  // common subsequence of both rankings
    LossBreakdown loss;
    double loss_value = 0.0;
    double ranker_latency = 0.0;  // milliseconds
    bool early_exit = false;
    std::string raw_reply;
};

// True iff order is a permutation of {0,...,k-1}.
bool validate_ranking(std::span<const int> order, int k);

// Deterministic space-joined rendering of a token sequence.
// Throws std::out_of_range on unknown token ids, std::invalid_argument on
// empty input.
std::string canonical_text(const Response& response, const Vocab& vocab);

// Inverse of canonical_text for the simulated side: splits on single spaces
// and looks words up in the vocab. Unknown words are dropped; the count of
// dropped words is reported through `dropped` when non-null.
TokenSeq tokenize_text(const std::string& text, const Vocab& vocab,
                       int* dropped = nullptr);

// JSON serialization (snake_case field names).
void to_json(nlohmann::json& j, const Instruction& v);
void from_json(const nlohmann::json& j, Instruction& v);
void to_json(nlohmann::json& j, const Response& v);
void from_json(const nlohmann::json& j, Response& v);
void to_json(nlohmann::json& j, const CandidateSet& v);
void from_json(const nlohmann::json& j, CandidateSet& v);
void to_json(nlohmann::json& j, const Ranking& v);
void from_json(const nlohmann::json& j, Ranking& v);
void to_json(nlohmann::json& j, const Demonstration& v);
void from_json(const nlohmann::json& j, Demonstration& v);
void to_json(nlohmann::json& j, const LossBreakdown& v);
void from_json(const nlohmann::json& j, LossBreakdown& v);
void to_json(nlohmann::json& j, const InteractionRecord& v);
void from_json(const nlohmann::json& j, InteractionRecord& v);

}  // namespace cyclealign
