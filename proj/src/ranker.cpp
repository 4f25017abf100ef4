#include "cyclealign/ranker.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "cyclealign/detail/httplib_all.hpp"

namespace cyclealign {

double hidden_reward(const SimulatedRankerConfig& config, const Instruction&,
                     const Response& y) {
    double reward = 0.0;
    for (Token t : y.tokens) {
        if (t >= 0 &&
            static_cast<std::size_t>(t) < config.reward_weights.size()) {
            reward += config.reward_weights[static_cast<std::size_t>(t)];
        }
    }
    return reward;
}

Ranking oracle_ranking(const SimulatedRankerConfig& config,
                       const CandidateSet& candidates) {
    std::vector<double> rewards;
    rewards.reserve(candidates.responses.size());
    for (const auto& r : candidates.responses) {
        rewards.push_back(hidden_reward(config, candidates.instruction, r));
    }
    Ranking out;
    out.order.resize(rewards.size());
    std::iota(out.order.begin(), out.order.end(), 0);
    std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
        return rewards[static_cast<std::size_t>(a)] >
               rewards[static_cast<std::size_t>(b)];
    });
    return out;
}

RankerReply simulated_rank(const SimulatedRankerConfig& config,
                           const Instruction& x, const CandidateSet& candidates,
                           int demo_count, std::uint64_t seed,
                           const Vocab& vocab) {
    if (demo_count < 0) {
        throw std::invalid_argument("simulated_rank: demo_count must be >= 0");
    }
    const double eps = std::clamp(
        config.epsilon0 * std::pow(config.rho, demo_count), 0.0, 1.0);

    RankerReply reply;
    reply.ranking = oracle_ranking(config, candidates);
    reply.demos_used = demo_count;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto& order = reply.ranking.order;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        if (unit(rng) < eps) std::swap(order[i], order[i + 1]);
    }

    const auto gold = config.gold_responses.find(x.id);
    if (gold == config.gold_responses.end()) {
        throw std::runtime_error("simulated_rank: no gold response for " + x.id);
    }
    Response gold_response;
    gold_response.tokens = gold->second;
    reply.improved_response_text = canonical_text(gold_response, vocab);
    reply.raw_reply = "simulated";
    return reply;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string lowered(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

// Parses one bracketed integer list starting at text[open] == '['.
// Returns false when the bracket does not enclose a plain integer list.
bool parse_bracket_list(const std::string& text, std::size_t open,
                        std::vector<int>& out, std::size_t& close) {
    out.clear();
    std::size_t i = open + 1;
    bool expecting_int = true;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == ']') {
            close = i;
            return !out.empty() && !expecting_int;
        }
        if (c == ',') {
            if (expecting_int) return false;
            expecting_int = true;
            ++i;
            continue;
        }
        if (!expecting_int) return false;
        bool negative = false;
        if (c == '-') {
            negative = true;
            ++i;
        }
        if (i >= text.size() ||
            !std::isdigit(static_cast<unsigned char>(text[i]))) {
            return false;
        }
        long value = 0;
        while (i < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[i]))) {
            value = value * 10 + (text[i] - '0');
            if (value > 1'000'000) return false;
            ++i;
        }
        out.push_back(static_cast<int>(negative ? -value : value));
        expecting_int = false;
    }
    return false;
}

}  // namespace

ParsedReply parse_ranking_reply(const std::string& text, int k) {
    std::vector<int> best;
    bool found = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        std::vector<int> list;
        std::size_t close = 0;
        if (parse_bracket_list(text, i, list, close) &&
            static_cast<int>(list.size()) == k && validate_ranking(list, k)) {
            best = list;  // last valid list wins
            found = true;
            i = close;
        }
    }
    if (!found) {
        throw ParseFailure("parse_ranking_reply: no valid permutation of length " +
                           std::to_string(k));
    }

    ParsedReply out;
    out.ranking.order = best;

    const std::string lower = lowered(text);
    const std::size_t marker = lower.rfind("better response");
    if (marker != std::string::npos) {
        const std::size_t colon = text.find(':', marker);
        if (colon != std::string::npos) {
            out.improved_response_text = trim(text.substr(colon + 1));
        }
    }
    return out;
}

namespace {

struct Endpoint {
    std::string base;  // scheme://host[:port]
    std::string path;
};

Endpoint split_endpoint(const std::string& url) {
    const std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("api endpoint must include a scheme: " + url);
    }
    const std::size_t path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

RankerReply api_rank(const ApiRankerConfig& config,
                     const std::string& prompt_text, int k) {
    if (k < 2) throw std::invalid_argument("api_rank: k must be >= 2");
    const char* key = std::getenv("CYCLEALIGN_API_KEY");

    const Endpoint endpoint = split_endpoint(config.endpoint);
    httplib::Client client(endpoint.base);
    const auto timeout =
        std::chrono::milliseconds(static_cast<long>(config.timeout_s * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    if (key) client.set_bearer_token_auth(key);

    const nlohmann::json request = {
        {"model", config.model},
        {"messages",
         nlohmann::json::array(
             {{{"role", "user"}, {"content", prompt_text}}})},
        {"temperature", config.temperature}};
    const std::string body = request.dump();

    std::string last_raw;
    std::string last_error;
    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<long>(config.backoff_base_ms) << (attempt - 1)));
        }
        auto res = client.Post(endpoint.path, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        last_raw = res->body;
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        std::string content;
        try {
            const auto parsed = nlohmann::json::parse(res->body);
            content = parsed.at("choices").at(0).at("message").at("content")
                          .get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("malformed completion body: ") + e.what();
            continue;
        }
        last_raw = content;
        try {
            ParsedReply parsed = parse_ranking_reply(content, k);
            RankerReply reply;
            reply.ranking = std::move(parsed.ranking);
            reply.improved_response_text =
                std::move(parsed.improved_response_text);
            reply.raw_reply = content;
            reply.latency_ms =
                std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - started)
                    .count();
            return reply;
        } catch (const ParseFailure& e) {
            last_error = e.what();
        }
    }
    throw RankerUnavailable("api_rank: retries exhausted (" + last_error + ")",
                            last_raw);
}

RankerReply SimulatedRanker::rank(const Instruction& x,
                                  const CandidateSet& candidates,
                                  const std::string&, int demo_count,
                                  std::uint64_t seed) {
    const auto started = std::chrono::steady_clock::now();
    RankerReply reply =
        simulated_rank(config_, x, candidates, demo_count, seed, vocab_);
    reply.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    return reply;
}

RankerReply ApiRanker::rank(const Instruction&, const CandidateSet& candidates,
                            const std::string& prompt, int demo_count,
                            std::uint64_t) {
    RankerReply reply = api_rank(
        config_, prompt, static_cast<int>(candidates.responses.size()));
    reply.demos_used = demo_count;
    return reply;
}

}  // namespace cyclealign
