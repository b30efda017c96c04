#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace causalbench::detail {

// Pairwise (cascade) summation over [first, first + n). O(log n) error
// growth versus O(n) for naive accumulation.
inline double pairwise_sum(const double* first, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 8) {
        double acc = first[0];
        for (std::size_t i = 1; i < n; ++i) acc += first[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(first, half) + pairwise_sum(first + half, n - half);
}

// Sum that is invariant under permutation of the input: values are sorted
// before the pairwise reduction, so any reordering of the same multiset
// produces the same float.
inline double stable_sum(std::span<const double> xs) {
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    return pairwise_sum(sorted.data(), sorted.size());
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

// Mean and population standard deviation (divisor n, not n - 1).
// Permutation invariant via stable_sum.
inline MeanSd mean_population_sd(std::span<const double> xs) {
    MeanSd out;
    const std::size_t n = xs.size();
    if (n == 0) return out;
    out.mean = stable_sum(xs) / static_cast<double>(n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - out.mean;
        sq[i] = d * d;
    }
    out.sd = std::sqrt(stable_sum(sq) / static_cast<double>(n));
    return out;
}

// Upper tail of the standard normal, P(Z > z). erfc keeps full relative
// precision in the far tail where 1 - Phi(z) would cancel.
inline double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

// log C(n, k); returns -inf for k outside [0, n].
inline double log_choose(std::uint64_t n, std::uint64_t k) {
    if (k > n) return -std::numeric_limits<double>::infinity();
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

inline bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace causalbench::detail
