#pragma once

// Rank statistics used to call differential expression.
//
// mann_whitney_u: two-sided Mann-Whitney U with the normal approximation.
// Ranks are midranks, so each group of t tied values contributes the mean of
// the ranks it spans. The null variance uses the tie-corrected form
//
//   var(U) = n1*n2/12 * ((n + 1) - sum(t^3 - t) / (n * (n - 1))),  n = n1+n2,
//
// and the z score applies a 0.5 continuity correction toward the mean
// n1*n2/2. The p value is 2 * P(Z > |z|), capped at 1. When every pooled
// value is identical the variance is zero and the p value is exactly 1.
//
// mann_whitney_exact: the exact two-sided p value by complete enumeration of
// the C(n, n1) assignments of the pooled midranks to the first group. Doubled
// midranks are integers, so the tail condition |U - n1*n2/2| >= |U_obs -
// n1*n2/2| is evaluated in exact integer arithmetic. Intended for the small
// samples where the normal approximation is doubtful; refuses n > 20.
//
// bh_adjust: Benjamini-Hochberg step-up adjusted p values. q_(i) =
// min over k >= i of p_(k) * m / k, clipped to 1, returned in input order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "causalbench/detail/numeric.hpp"
#include "causalbench/errors.hpp"

namespace causalbench {

struct MannWhitneyResult {
    double u = 0.0;           // U statistic of the first sample
    double p_two_sided = 1.0;
};

namespace detail_stats {

// Midranks of the pooled sample, doubled so they are exact integers.
// Returns per-observation doubled ranks in pooled sorted order together with
// the group flag, plus the tie term sum(t^3 - t).
struct PooledRanks {
    std::vector<std::int64_t> doubled_rank;  // parallel to sorted order
    std::vector<bool> first_group;           // parallel to sorted order
    double tie_term = 0.0;                   // sum over tie groups of t^3 - t
};

inline PooledRanks pooled_midranks(std::span<const double> a, std::span<const double> b) {
    struct Tagged {
        double value;
        bool first;
    };
    std::vector<Tagged> pooled;
    pooled.reserve(a.size() + b.size());
    for (double v : a) pooled.push_back({v, true});
    for (double v : b) pooled.push_back({v, false});
    // Sort by value only: tied observations keep arbitrary relative order,
    // which midranks make irrelevant.
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const Tagged& x, const Tagged& y) { return x.value < y.value; });
    PooledRanks out;
    const std::size_t n = pooled.size();
    out.doubled_rank.resize(n);
    out.first_group.resize(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && pooled[j].value == pooled[i].value) ++j;
        const std::size_t t = j - i;
        // Ranks i+1 .. j span the tie group; doubled midrank = (i+1) + j.
        const std::int64_t doubled = static_cast<std::int64_t>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            out.doubled_rank[k] = doubled;
            out.first_group[k] = pooled[k].first;
        }
        const double td = static_cast<double>(t);
        out.tie_term += td * td * td - td;
        i = j;
    }
    return out;
}

}  // namespace detail_stats

inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DataError("mann_whitney_u requires two non-empty samples");
    if (!detail::all_finite(a) || !detail::all_finite(b)) {
        throw DataError("mann_whitney_u requires finite values");
    }
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    const double n = n1 + n2;

    const auto ranks = detail_stats::pooled_midranks(a, b);
    std::int64_t doubled_r1 = 0;
    for (std::size_t i = 0; i < ranks.doubled_rank.size(); ++i) {
        if (ranks.first_group[i]) doubled_r1 += ranks.doubled_rank[i];
    }
    // U1 = R1 - n1*(n1+1)/2, computed from exact doubled integers.
    const double u1 =
        static_cast<double>(doubled_r1 - static_cast<std::int64_t>(a.size()) *
                                             static_cast<std::int64_t>(a.size() + 1)) /
        2.0;

    MannWhitneyResult res;
    res.u = u1;
    const double tie_correction = ranks.tie_term / (n * (n - 1.0));
    const double variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_correction);
    if (variance <= 0.0) {
        // All pooled values identical: no evidence of a shift.
        res.p_two_sided = 1.0;
        return res;
    }
    const double mean = n1 * n2 / 2.0;
    const double shift = std::max(std::abs(u1 - mean) - 0.5, 0.0);  // continuity correction
    const double z = shift / std::sqrt(variance);
    res.p_two_sided = std::min(1.0, 2.0 * detail::normal_sf(z));
    return res;
}

inline double mann_whitney_exact(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DataError("mann_whitney_exact requires two non-empty samples");
    const std::size_t n1 = a.size();
    const std::size_t n = n1 + b.size();
    if (n > 20) {
        throw UnsupportedSizeError("mann_whitney_exact enumerates C(n, n1) assignments; n = " +
                                   std::to_string(n) + " exceeds the supported limit of 20");
    }
    const auto ranks = detail_stats::pooled_midranks(a, b);

    // Everything below is integer arithmetic on doubled quantities:
    // doubled U1 = sum of doubled ranks of group 1 - n1*(n1+1), and the
    // doubled mean of U1 is n1*n2.
    const std::int64_t offset = static_cast<std::int64_t>(n1) * static_cast<std::int64_t>(n1 + 1);
    const std::int64_t doubled_mean =
        static_cast<std::int64_t>(n1) * static_cast<std::int64_t>(n - n1);
    std::int64_t observed_doubled_r1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ranks.first_group[i]) observed_doubled_r1 += ranks.doubled_rank[i];
    }
    const std::int64_t observed_dist = std::abs(observed_doubled_r1 - offset - doubled_mean);

    // Enumerate all n-choose-n1 index subsets in lexicographic order.
    std::vector<std::size_t> comb(n1);
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    std::uint64_t at_least_as_extreme = 0;
    std::uint64_t total = 0;
    while (true) {
        std::int64_t doubled_r1 = 0;
        for (std::size_t idx : comb) doubled_r1 += ranks.doubled_rank[idx];
        if (std::abs(doubled_r1 - offset - doubled_mean) >= observed_dist) ++at_least_as_extreme;
        ++total;

        // Advance to the next combination.
        std::size_t i = n1;
        while (i > 0) {
            --i;
            if (comb[i] != i + n - n1) break;
            if (i == 0) {
                return static_cast<double>(at_least_as_extreme) / static_cast<double>(total);
            }
        }
        ++comb[i];
        for (std::size_t j = i + 1; j < n1; ++j) comb[j] = comb[j - 1] + 1;
    }
}

inline std::vector<double> bh_adjust(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw DataError("bh_adjust requires p values in [0, 1]");
        }
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
    std::vector<double> adjusted(m);
    double running_min = 1.0;
    for (std::size_t i = m; i > 0; --i) {
        const std::size_t rank = i;  // 1-based rank in ascending order
        // p * (m / rank), not (p * m) / rank: the factor m/rank is >= 1 in
        // floating point, so an adjusted value can never round below its raw
        // p value (at rank m the factor is exactly 1).
        const double q =
            p_values[order[i - 1]] * (static_cast<double>(m) / static_cast<double>(rank));
        running_min = std::min(running_min, q);
        adjusted[order[i - 1]] = running_min;
    }
    return adjusted;
}

}  // namespace causalbench
