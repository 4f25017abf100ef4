#include "cyclealign/types.hpp"

#include <sstream>
#include <stdexcept>

namespace cyclealign {

Vocab default_vocab(int vocab_size) {
    Vocab v;
    v.reserve(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < vocab_size; ++i) {
        v.push_back("t" + std::to_string(i));
    }
    return v;
}

bool validate_ranking(std::span<const int> order, int k) {
    if (static_cast<int>(order.size()) != k) return false;
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (int idx : order) {
        if (idx < 0 || idx >= k) return false;
        if (seen[static_cast<std::size_t>(idx)]) return false;
        seen[static_cast<std::size_t>(idx)] = true;
    }
    return true;
}

std::string canonical_text(const Response& response, const Vocab& vocab) {
    if (response.tokens.empty()) {
        throw std::invalid_argument("canonical_text: empty token sequence");
    }
    std::string out;
    for (std::size_t i = 0; i < response.tokens.size(); ++i) {
        Token t = response.tokens[i];
        if (t < 0 || static_cast<std::size_t>(t) >= vocab.size()) {
            throw std::out_of_range("canonical_text: unknown token id " +
                                    std::to_string(t));
        }
        if (i > 0) out += ' ';
        out += vocab[static_cast<std::size_t>(t)];
    }
    return out;
}

TokenSeq tokenize_text(const std::string& text, const Vocab& vocab,
                       int* dropped) {
    std::map<std::string, Token> inverse;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        inverse.emplace(vocab[i], static_cast<Token>(i));
    }
    TokenSeq out;
    int skipped = 0;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        auto it = inverse.find(word);
        if (it == inverse.end()) {
            ++skipped;
        } else {
            out.push_back(it->second);
        }
    }
    if (dropped) *dropped = skipped;
    return out;
}

void to_json(nlohmann::json& j, const Instruction& v) {
    j = nlohmann::json{{"id", v.id}, {"text", v.text}};
}

void from_json(const nlohmann::json& j, Instruction& v) {
    j.at("id").get_to(v.id);
    j.at("text").get_to(v.text);
}

void to_json(nlohmann::json& j, const Response& v) {
    j = nlohmann::json{{"tokens", v.tokens}};
    if (v.token_logprobs) j["token_logprobs"] = *v.token_logprobs;
    if (v.text) j["text"] = *v.text;
}

void from_json(const nlohmann::json& j, Response& v) {
    j.at("tokens").get_to(v.tokens);
    v.token_logprobs.reset();
    v.text.reset();
    if (j.contains("token_logprobs")) {
        v.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
    }
    if (j.contains("text")) v.text = j.at("text").get<std::string>();
}

void to_json(nlohmann::json& j, const CandidateSet& v) {
    j = nlohmann::json{{"instruction", v.instruction},
                       {"responses", v.responses}};
}

void from_json(const nlohmann::json& j, CandidateSet& v) {
    j.at("instruction").get_to(v.instruction);
    j.at("responses").get_to(v.responses);
}

void to_json(nlohmann::json& j, const Ranking& v) { j = v.order; }

void from_json(const nlohmann::json& j, Ranking& v) { j.get_to(v.order); }

void to_json(nlohmann::json& j, const Demonstration& v) {
    j = nlohmann::json{
        {"instruction_text", v.instruction_text},
        {"response_texts", v.response_texts},
        {"desired_ranking", v.desired_ranking},
        {"origin", v.origin == Demonstration::Origin::Static ? "static"
                                                             : "dynamic"}};
}

void from_json(const nlohmann::json& j, Demonstration& v) {
    j.at("instruction_text").get_to(v.instruction_text);
    j.at("response_texts").get_to(v.response_texts);
    j.at("desired_ranking").get_to(v.desired_ranking);
    const auto origin = j.at("origin").get<std::string>();
    if (origin == "static") {
        v.origin = Demonstration::Origin::Static;
    } else if (origin == "dynamic") {
        v.origin = Demonstration::Origin::Dynamic;
    } else {
        throw std::invalid_argument("Demonstration.origin: " + origin);
    }
}

void to_json(nlohmann::json& j, const LossBreakdown& v) {
    j = nlohmann::json{{"rank_loss", v.rank_loss},
                       {"sft_loss", v.sft_loss},
                       {"lambda", v.lambda},
                       {"total", v.total}};
}

void from_json(const nlohmann::json& j, LossBreakdown& v) {
    j.at("rank_loss").get_to(v.rank_loss);
    j.at("sft_loss").get_to(v.sft_loss);
    j.at("lambda").get_to(v.lambda);
    j.at("total").get_to(v.total);
}

void to_json(nlohmann::json& j, const InteractionRecord& v) {
    j = nlohmann::json{{"step", v.step},
                       {"iteration", v.iteration},
                       {"white_ranking", v.white_ranking},
                       {"black_ranking", v.black_ranking},
                       {"agreement", v.agreement},
                       {"loss", v.loss},
                       {"loss_value", v.loss_value},
                       {"ranker_latency", v.ranker_latency},
                       {"early_exit", v.early_exit},
                       {"raw_reply", v.raw_reply}};
}

void from_json(const nlohmann::json& j, InteractionRecord& v) {
    j.at("step").get_to(v.step);
    j.at("iteration").get_to(v.iteration);
    j.at("white_ranking").get_to(v.white_ranking);
    j.at("black_ranking").get_to(v.black_ranking);
    j.at("agreement").get_to(v.agreement);
    j.at("loss").get_to(v.loss);
    j.at("loss_value").get_to(v.loss_value);
    j.at("ranker_latency").get_to(v.ranker_latency);
    j.at("early_exit").get_to(v.early_exit);
    j.at("raw_reply").get_to(v.raw_reply);
}

}  // namespace cyclealign
