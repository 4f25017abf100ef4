#include "cyclealign/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

namespace cyclealign {

std::vector<double> log_softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    const double lse = m + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    auto out = log_softmax(logits);
    for (double& v : out) v = std::exp(v);
    return out;
}

ToyPolicy::ToyPolicy(int vocab_size, int response_length)
    : vocab_size_(vocab_size), response_length_(response_length) {
    if (vocab_size < 2) throw std::invalid_argument("ToyPolicy: V must be >= 2");
    if (response_length < 1)
        throw std::invalid_argument("ToyPolicy: L must be >= 1");
}

std::vector<double>& ToyPolicy::slot(const std::string& instruction_id) {
    auto it = logits_.find(instruction_id);
    if (it == logits_.end()) {
        it = logits_
                 .emplace(instruction_id,
                          std::vector<double>(
                              static_cast<std::size_t>(response_length_) *
                                  static_cast<std::size_t>(vocab_size_),
                              0.0))
                 .first;
    }
    return it->second;
}

const std::vector<double>& ToyPolicy::slot(
    const std::string& instruction_id) const {
    return const_cast<ToyPolicy*>(this)->slot(instruction_id);
}

std::span<const double> ToyPolicy::logits_at(const std::string& instruction_id,
                                             int position) const {
    if (position < 0 || position >= response_length_) {
        throw std::invalid_argument("logits_at: position out of range");
    }
    const auto& row = slot(instruction_id);
    return {row.data() + static_cast<std::size_t>(position) *
                             static_cast<std::size_t>(vocab_size_),
            static_cast<std::size_t>(vocab_size_)};
}

std::vector<double> ToyPolicy::response_logprobs(const Instruction& x,
                                                 const Response& y) const {
    if (static_cast<int>(y.tokens.size()) != response_length_) {
        throw std::invalid_argument(
            "response_logprobs: response length != L");
    }
    std::vector<double> out;
    out.reserve(y.tokens.size());
    for (int t = 0; t < response_length_; ++t) {
        const Token tok = y.tokens[static_cast<std::size_t>(t)];
        if (tok < 0 || tok >= vocab_size_) {
            throw std::invalid_argument("response_logprobs: token out of range");
        }
        const auto lp = log_softmax(logits_at(x.id, t));
        out.push_back(lp[static_cast<std::size_t>(tok)]);
    }
    return out;
}

namespace {

// CDF inversion keeps sampling deterministic across standard libraries.
int sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace

CandidateSet ToyPolicy::sample_responses(const Instruction& x, int k,
                                         double temperature,
                                         std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("sample_responses: k must be >= 2");
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("sample_responses: temperature must be > 0");
    }
    std::mt19937_64 rng(seed);

    std::vector<std::vector<double>> tempered(
        static_cast<std::size_t>(response_length_));
    std::vector<std::vector<double>> untempered(
        static_cast<std::size_t>(response_length_));
    for (int t = 0; t < response_length_; ++t) {
        const auto row = logits_at(x.id, t);
        std::vector<double> scaled(row.begin(), row.end());
        for (double& z : scaled) z /= temperature;
        tempered[static_cast<std::size_t>(t)] = softmax(scaled);
        untempered[static_cast<std::size_t>(t)] = log_softmax(row);
    }

    CandidateSet out;
    out.instruction = x;
    std::set<TokenSeq> seen;
    const int max_draws = 100 * k;
    for (int draw = 0; draw < max_draws &&
                       static_cast<int>(out.responses.size()) < k;
         ++draw) {
        TokenSeq tokens(static_cast<std::size_t>(response_length_));
        for (int t = 0; t < response_length_; ++t) {
            tokens[static_cast<std::size_t>(t)] = static_cast<Token>(
                sample_index(tempered[static_cast<std::size_t>(t)], rng));
        }
        if (!seen.insert(tokens).second) continue;
        Response r;
        r.tokens = std::move(tokens);
        std::vector<double> lps(static_cast<std::size_t>(response_length_));
        for (int t = 0; t < response_length_; ++t) {
            lps[static_cast<std::size_t>(t)] =
                untempered[static_cast<std::size_t>(t)]
                          [static_cast<std::size_t>(
                              r.tokens[static_cast<std::size_t>(t)])];
        }
        r.token_logprobs = std::move(lps);
        out.responses.push_back(std::move(r));
    }
    if (static_cast<int>(out.responses.size()) < k) {
        throw SamplingCollapse(
            "sample_responses: could not draw " + std::to_string(k) +
            " distinct responses within " + std::to_string(max_draws) +
            " draws (vocabulary too collapsed)");
    }
    return out;
}

void ToyPolicy::apply_gradient(const Gradient& grad, double learning_rate) {
    if (grad.version_of_policy != version_) {
        throw std::invalid_argument(
            "apply_gradient: gradient computed for policy version " +
            std::to_string(grad.version_of_policy) + ", current is " +
            std::to_string(version_));
    }
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("apply_gradient: learning_rate must be > 0");
    }
    for (const auto& [id, g] : grad.by_instruction) {
        auto& row = slot(id);
        if (g.size() != row.size()) {
            throw std::invalid_argument("apply_gradient: gradient shape mismatch");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            row[i] -= learning_rate * g[i];
        }
    }
    ++version_;
}

Response ToyPolicy::greedy_response(const Instruction& x) const {
    Response r;
    r.tokens.resize(static_cast<std::size_t>(response_length_));
    std::vector<double> lps(static_cast<std::size_t>(response_length_));
    for (int t = 0; t < response_length_; ++t) {
        const auto row = logits_at(x.id, t);
        int best = 0;
        for (int v = 1; v < vocab_size_; ++v) {
            if (row[static_cast<std::size_t>(v)] >
                row[static_cast<std::size_t>(best)]) {
                best = v;
            }
        }
        r.tokens[static_cast<std::size_t>(t)] = best;
        lps[static_cast<std::size_t>(t)] =
            log_softmax(row)[static_cast<std::size_t>(best)];
    }
    r.token_logprobs = std::move(lps);
    return r;
}

void ToyPolicy::perturb_logit(const std::string& instruction_id, int position,
                              Token token, double delta) {
    if (position < 0 || position >= response_length_ || token < 0 ||
        token >= vocab_size_) {
        throw std::invalid_argument("perturb_logit: index out of range");
    }
    slot(instruction_id)[static_cast<std::size_t>(position) *
                             static_cast<std::size_t>(vocab_size_) +
                         static_cast<std::size_t>(token)] += delta;
}

std::vector<std::string> ToyPolicy::instruction_ids() const {
    std::vector<std::string> ids;
    ids.reserve(logits_.size());
    for (const auto& [id, _] : logits_) ids.push_back(id);
    return ids;
}

nlohmann::json ToyPolicy::to_checkpoint() const {
    nlohmann::json logits = nlohmann::json::object();
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& [id, row] : logits_) {
        ids.push_back(id);
        nlohmann::json nested = nlohmann::json::array();
        for (int t = 0; t < response_length_; ++t) {
            nested.push_back(std::vector<double>(
                row.begin() + static_cast<std::ptrdiff_t>(t) * vocab_size_,
                row.begin() +
                    static_cast<std::ptrdiff_t>(t + 1) * vocab_size_));
        }
        logits[id] = std::move(nested);
    }
    return nlohmann::json{{"version", version_},
                          {"V", vocab_size_},
                          {"L", response_length_},
                          {"instruction_ids", std::move(ids)},
                          {"logits", std::move(logits)}};
}

ToyPolicy ToyPolicy::from_checkpoint(const nlohmann::json& j) {
    ToyPolicy p(j.at("V").get<int>(), j.at("L").get<int>());
    p.version_ = j.at("version").get<std::int64_t>();
    for (const auto& id : j.at("instruction_ids")) {
        const auto key = id.get<std::string>();
        const auto& nested = j.at("logits").at(key);
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(p.response_length_) *
                    static_cast<std::size_t>(p.vocab_size_));
        for (const auto& per_position : nested) {
            for (const auto& v : per_position) row.push_back(v.get<double>());
        }
        if (static_cast<int>(row.size()) !=
            p.response_length_ * p.vocab_size_) {
            throw std::invalid_argument("from_checkpoint: logits shape mismatch");
        }
        p.logits_[key] = std::move(row);
    }
    return p;
}

void ToyPolicy::save_checkpoint(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << to_checkpoint().dump(2) << '\n';
}

ToyPolicy ToyPolicy::load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_checkpoint(j);
}

}  // namespace cyclealign
