#include "cyclealign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyclealign {

double sft_loss(std::span<const double> token_logprobs) {
    if (token_logprobs.empty()) {
        throw std::invalid_argument("sft_loss: empty log-prob sequence");
    }
    double sum = 0.0;
    for (double lp : token_logprobs) {
        if (lp > 0.0) {
            throw std::invalid_argument("sft_loss: log-probability > 0");
        }
        sum += lp;
    }
    return -sum / static_cast<double>(token_logprobs.size());
}

double length_normalized_score(std::span<const double> token_logprobs) {
    if (token_logprobs.empty()) {
        throw std::invalid_argument(
            "length_normalized_score: empty log-prob sequence");
    }
    double sum = 0.0;
    for (double lp : token_logprobs) sum += lp;
    return sum / static_cast<double>(token_logprobs.size());
}

double rrhf_rank_loss(std::span<const double> scores_best_first) {
    const std::size_t n = scores_best_first.size();
    if (n < 2) throw std::invalid_argument("rrhf_rank_loss: need >= 2 scores");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            loss += std::max(0.0, scores_best_first[j] - scores_best_first[i]);
        }
    }
    return loss;
}

double pro_rank_loss(std::span<const double> scores_best_first) {
    const std::size_t n = scores_best_first.size();
    if (n < 2) throw std::invalid_argument("pro_rank_loss: need >= 2 scores");
    for (double s : scores_best_first) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument("pro_rank_loss: non-finite score");
        }
    }
    double loss = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto suffix = scores_best_first.subspan(k);
        const double m = *std::max_element(suffix.begin(), suffix.end());
        double sum = 0.0;
        for (double s : suffix) sum += std::exp(s - m);
        loss += (m + std::log(sum)) - scores_best_first[k];
    }
    return loss;
}

namespace {

int sampled_count(const PreferenceList& prefs) {
    int l = 0;
    for (auto src : prefs.sources) {
        if (src == ResponseSource::WhiteBoxSampled) ++l;
    }
    return l;
}

double lambda_for(const PreferenceList& prefs, LambdaBasis basis) {
    const int l = basis == LambdaBasis::SampledCount
                      ? sampled_count(prefs)
                      : static_cast<int>(prefs.responses.size());
    const double lm1 = static_cast<double>(l - 1);
    return lm1 * lm1;
}

void validate_prefs(const PreferenceList& prefs) {
    if (prefs.responses.size() < 2) {
        throw std::invalid_argument("PreferenceList: need >= 2 responses");
    }
    if (prefs.sources.size() != prefs.responses.size()) {
        throw std::invalid_argument("PreferenceList: sources/responses mismatch");
    }
}

double rank_loss_of(RankObjectiveKind kind, std::span<const double> scores) {
    return kind == RankObjectiveKind::RRHF ? rrhf_rank_loss(scores)
                                           : pro_rank_loss(scores);
}

// dL_rank/ds for each score.
std::vector<double> rank_loss_score_grad(RankObjectiveKind kind,
                                         std::span<const double> scores) {
    const std::size_t n = scores.size();
    std::vector<double> g(n, 0.0);
    if (kind == RankObjectiveKind::RRHF) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (scores[j] > scores[i]) {
                    g[j] += 1.0;
                    g[i] -= 1.0;
                }
            }
        }
    } else {
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const auto suffix = scores.subspan(k);
            const auto p = softmax(suffix);
            for (std::size_t i = 0; i < p.size(); ++i) g[k + i] += p[i];
            g[k] -= 1.0;
        }
    }
    return g;
}

}  // namespace

LossBreakdown combined_loss(RankObjectiveKind kind, const PreferenceList& prefs,
                            LambdaBasis basis) {
    validate_prefs(prefs);
    std::vector<double> scores;
    scores.reserve(prefs.responses.size());
    for (const auto& r : prefs.responses) {
        if (!r.token_logprobs) {
            throw std::invalid_argument("combined_loss: response missing token_logprobs");
        }
        scores.push_back(length_normalized_score(*r.token_logprobs));
    }
    LossBreakdown out;
    out.rank_loss = rank_loss_of(kind, scores);
    out.sft_loss = sft_loss(*prefs.responses.front().token_logprobs);
    out.lambda = lambda_for(prefs, basis);
    out.total = out.rank_loss + out.lambda * out.sft_loss;
    return out;
}

LossBreakdown combined_loss_from_policy(RankObjectiveKind kind,
                                        const PreferenceList& prefs,
                                        const ToyPolicy& policy,
                                        LambdaBasis basis) {
    validate_prefs(prefs);
    PreferenceList rescored = prefs;
    for (auto& r : rescored.responses) {
        r.token_logprobs = policy.response_logprobs(prefs.instruction, r);
    }
    return combined_loss(kind, rescored, basis);
}

Gradient loss_gradient(RankObjectiveKind kind, const PreferenceList& prefs,
                       const ToyPolicy& policy, LambdaBasis basis) {
    validate_prefs(prefs);
    const int L = policy.response_length();
    const int V = policy.vocab_size();
    const std::string& xid = prefs.instruction.id;

    const std::size_t n = prefs.responses.size();
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = prefs.responses[i];
        if (!r.token_logprobs) {
            throw std::invalid_argument("loss_gradient: response missing token_logprobs");
        }
        const auto fresh = policy.response_logprobs(prefs.instruction, r);
        if (fresh != *r.token_logprobs) {
            throw std::invalid_argument(
                "loss_gradient: stale token_logprobs (policy changed since scoring)");
        }
        scores[i] = length_normalized_score(fresh);
    }

    const auto ds = rank_loss_score_grad(kind, scores);
    const double lambda = lambda_for(prefs, basis);

    Gradient grad;
    grad.version_of_policy = policy.version();
    auto& g = grad.by_instruction[xid];
    g.assign(static_cast<std::size_t>(L) * static_cast<std::size_t>(V), 0.0);

    // Per-position softmax of the current logits, shared across responses.
    std::vector<std::vector<double>> probs(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
        probs[static_cast<std::size_t>(t)] = softmax(policy.logits_at(xid, t));
    }

    const double inv_len = 1.0 / static_cast<double>(L);
    for (std::size_t i = 0; i < n; ++i) {
        // Rank-loss chain: ds_i/dtheta[t][v] = (1/L)(1[v=y_t] - p[v]).
        const double w = ds[i] * inv_len;
        // SFT chain on the top response: +lambda*(1/L)(p[v] - 1[v=y_t]).
        const double sft_w = (i == 0) ? lambda * inv_len : 0.0;
        const double coeff = w - sft_w;
        if (coeff == 0.0) continue;
        const auto& tokens = prefs.responses[i].tokens;
        for (int t = 0; t < L; ++t) {
            const auto& p = probs[static_cast<std::size_t>(t)];
            double* row = g.data() + static_cast<std::size_t>(t) *
                                         static_cast<std::size_t>(V);
            for (int v = 0; v < V; ++v) {
                row[static_cast<std::size_t>(v)] -=
                    coeff * p[static_cast<std::size_t>(v)];
            }
            row[static_cast<std::size_t>(
                tokens[static_cast<std::size_t>(t)])] += coeff;
        }
    }
    return grad;
}

double finite_difference_check(RankObjectiveKind kind,
                               const PreferenceList& prefs,
                               const ToyPolicy& policy, double epsilon,
                               LambdaBasis basis) {
    if (!(epsilon > 0.0) || epsilon > 1e-2) {
        throw std::invalid_argument(
            "finite_difference_check: epsilon must be in (0, 1e-2]");
    }
    const auto grad = loss_gradient(kind, prefs, policy, basis);
    const auto& g = grad.by_instruction.at(prefs.instruction.id);

    ToyPolicy probe = policy;
    const int L = policy.response_length();
    const int V = policy.vocab_size();
    const std::string& xid = prefs.instruction.id;

    double max_rel = 0.0;
    for (int t = 0; t < L; ++t) {
        for (int v = 0; v < V; ++v) {
            probe.perturb_logit(xid, t, v, epsilon);
            const double up =
                combined_loss_from_policy(kind, prefs, probe, basis).total;
            probe.perturb_logit(xid, t, v, -2.0 * epsilon);
            const double down =
                combined_loss_from_policy(kind, prefs, probe, basis).total;
            probe.perturb_logit(xid, t, v, epsilon);

            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = g[static_cast<std::size_t>(t) *
                                          static_cast<std::size_t>(V) +
                                      static_cast<std::size_t>(v)];
            const double denom = std::max(
                1.0, std::max(std::fabs(numeric), std::fabs(analytic)));
            max_rel = std::max(max_rel, std::fabs(numeric - analytic) / denom);
        }
    }
    return max_rel;
}

}  // namespace cyclealign
