#include "cyclealign/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cyclealign {

Ranking confidence_ranking(std::span<const double> scores) {
    if (scores.size() < 2) {
        throw std::invalid_argument("confidence_ranking: need >= 2 scores");
    }
    for (double s : scores) {
        if (std::isnan(s)) {
            throw std::invalid_argument("confidence_ranking: NaN score");
        }
    }
    Ranking r;
    r.order.resize(scores.size());
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] >
               scores[static_cast<std::size_t>(b)];
    });
    return r;
}

namespace {

void check_pair(const Ranking& a, const Ranking& b, const char* who) {
    const int k = static_cast<int>(a.order.size());
    if (static_cast<int>(b.order.size()) != k) {
        throw std::invalid_argument(std::string(who) + ": rankings differ in k");
    }
    if (!validate_ranking(a.order, k) || !validate_ranking(b.order, k)) {
        throw std::invalid_argument(std::string(who) + ": invalid ranking");
    }
}

}  // namespace

AgreementSubsequence lcs_agreement(const Ranking& black, const Ranking& white) {
    check_pair(black, white, "lcs_agreement");
    const int k = static_cast<int>(black.order.size());

    // Position of each item in the white ranking.
    std::vector<int> white_pos(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        white_pos[static_cast<std::size_t>(white.order[static_cast<std::size_t>(j)])] = j;
    }

    // len[i][j] = LCS length of black[i:] vs white[j:].
    std::vector<std::vector<int>> len(
        static_cast<std::size_t>(k) + 1,
        std::vector<int>(static_cast<std::size_t>(k) + 1, 0));
    for (int i = k - 1; i >= 0; --i) {
        for (int j = k - 1; j >= 0; --j) {
            const auto ii = static_cast<std::size_t>(i);
            const auto jj = static_cast<std::size_t>(j);
            if (black.order[ii] == white.order[jj]) {
                len[ii][jj] = 1 + len[ii + 1][jj + 1];
            } else {
                len[ii][jj] = std::max(len[ii + 1][jj], len[ii][jj + 1]);
            }
        }
    }

    // Greedy traceback: always take the earliest black position that still
    // completes a maximum-length subsequence. This makes the black-position
    // sequence lexicographically smallest among all maxima.
    AgreementSubsequence out;
    int remaining = len[0][0];
    int i = 0;
    int j = 0;
    while (remaining > 0) {
        for (; i < k; ++i) {
            const int item = black.order[static_cast<std::size_t>(i)];
            const int wp = white_pos[static_cast<std::size_t>(item)];
            if (wp >= j &&
                1 + len[static_cast<std::size_t>(i) + 1]
                       [static_cast<std::size_t>(wp) + 1] == remaining) {
                out.indices.push_back(item);
                j = wp + 1;
                ++i;
                --remaining;
                break;
            }
        }
    }
    return out;
}

bool ranking_exact_match(const Ranking& a, const Ranking& b) {
    check_pair(a, b, "ranking_exact_match");
    return a.order == b.order;
}

double kendall_tau(const Ranking& a, const Ranking& b) {
    check_pair(a, b, "kendall_tau");
    const int k = static_cast<int>(a.order.size());
    if (k < 2) throw std::invalid_argument("kendall_tau: need k >= 2");

    std::vector<int> pos_a(static_cast<std::size_t>(k));
    std::vector<int> pos_b(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        pos_a[static_cast<std::size_t>(a.order[static_cast<std::size_t>(i)])] = i;
        pos_b[static_cast<std::size_t>(b.order[static_cast<std::size_t>(i)])] = i;
    }
    int concordant = 0;
    int discordant = 0;
    for (int x = 0; x < k; ++x) {
        for (int y = x + 1; y < k; ++y) {
            const auto xs = static_cast<std::size_t>(x);
            const auto ys = static_cast<std::size_t>(y);
            const long da = pos_a[xs] - pos_a[ys];
            const long db = pos_b[xs] - pos_b[ys];
            if (da * db > 0) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    return static_cast<double>(concordant - discordant) /
           static_cast<double>(concordant + discordant);
}

}  // namespace cyclealign
