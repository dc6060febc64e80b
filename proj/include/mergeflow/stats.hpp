#pragma once

// Paired significance test, effect size and descriptive summaries.

#include <cstddef>
#include <span>
#include <stdexcept>

namespace mergeflow::stats {

/// Thrown when every paired difference is zero.
class NoDifferences : public std::domain_error {
public:
    NoDifferences() : std::domain_error("wilcoxon: all paired differences are zero") {}
};

struct WilcoxonResult {
    double w = 0.0;  // sum of ranks of positive differences
    double p = 1.0;  // one-sided, alternative: xs > ys
    std::size_t n = 0;  // nonzero differences
    bool exact = false;
};

/// Largest effective n evaluated by exact enumeration.
inline constexpr std::size_t kExactLimit = 20;

/// Zero differences are dropped and tied magnitudes get average ranks.
/// Exact null distribution up to kExactLimit, otherwise the normal
/// approximation with tie and continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> xs, std::span<const double> ys);

/// Probability that a draw from xs exceeds one from ys, ties counted half.
/// Throws std::invalid_argument on an empty sample.
double vargha_delaney_a12(std::span<const double> xs, std::span<const double> ys);

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr() const { return q3 - q1; }
};

/// Quartiles use linear interpolation between order statistics. All zero
/// for an empty sample.
Summary summarize(std::span<const double> values);

}  // namespace mergeflow::stats
