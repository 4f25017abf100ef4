#pragma once

#include <span>
#include <vector>

#include "cyclealign/types.hpp"

namespace cyclealign {

struct AgreementSubsequence {
    std::vector<int> indices;  // common subsequence of both rankings

    int length() const { return static_cast<int>(indices.size()); }
};

// Rank candidates by score descending, ties broken by ascending index.
// Throws on NaN scores or fewer than 2 entries.
Ranking confidence_ranking(std::span<const double> scores);

// Longest common subsequence of the two rankings. Among all maximum-length
// common subsequences, returns the one whose sequence of positions in the
// black ranking is lexicographically smallest, i.e. preferring items the
// black box ranked highest.
AgreementSubsequence lcs_agreement(const Ranking& black, const Ranking& white);

bool ranking_exact_match(const Ranking& a, const Ranking& b);

// Kendall rank correlation between two rankings of the same items;
// 1 for identical orders, -1 for full reversal.
double kendall_tau(const Ranking& a, const Ranking& b);

}  // namespace cyclealign
