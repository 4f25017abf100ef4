#pragma once

#include <span>

#include "cyclealign/policy.hpp"
#include "cyclealign/types.hpp"

namespace cyclealign {

enum class RankObjectiveKind { RRHF, PRO };

// -(1/|y|) * sum_t log P(y_t); always >= 0.
double sft_loss(std::span<const double> token_logprobs);

// Mean token log-probability; the white-box "confidence" score.
double length_normalized_score(std::span<const double> token_logprobs);

// Pairwise hinge over best-first scores: sum_{i<j} max(0, s_j - s_i).
double rrhf_rank_loss(std::span<const double> scores_best_first);

// Iterated softmax-over-suffix NLL:
//   -sum_{k=1}^{n-1} log( exp(s_k) / sum_{i=k}^{n} exp(s_i) )
// computed with max subtraction.
double pro_rank_loss(std::span<const double> scores_best_first);

// How l is counted when deriving lambda = (l-1)^2.
enum class LambdaBasis { SampledCount, FullLength };

// Eq-style combined objective over a best-first preference list.
// Scores are length-normalized log-probs of each response; the SFT term uses
// the index-0 response.
LossBreakdown combined_loss(RankObjectiveKind kind, const PreferenceList& prefs,
                            LambdaBasis basis = LambdaBasis::SampledCount);

// Analytic gradient of combined_loss(...).total w.r.t. the policy logits.
// Verifies that every cached token_logprobs vector matches recomputation
// under the current policy; a mismatch means the logprobs are stale and is a
// hard error.
Gradient loss_gradient(RankObjectiveKind kind, const PreferenceList& prefs,
                       const ToyPolicy& policy,
                       LambdaBasis basis = LambdaBasis::SampledCount);

// Central finite differences over every logit of the touched instruction;
// returns the max relative error against loss_gradient.
double finite_difference_check(RankObjectiveKind kind,
                               const PreferenceList& prefs,
                               const ToyPolicy& policy, double epsilon,
                               LambdaBasis basis = LambdaBasis::SampledCount);

// combined_loss with all logprobs recomputed from the policy (ignores any
// cached values). Shared by the finite-difference path.
LossBreakdown combined_loss_from_policy(RankObjectiveKind kind,
                                        const PreferenceList& prefs,
                                        const ToyPolicy& policy,
                                        LambdaBasis basis =
                                            LambdaBasis::SampledCount);

}  // namespace cyclealign
