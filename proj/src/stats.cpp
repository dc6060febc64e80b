#include "mergeflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace mergeflow::stats {

namespace {

// Average 1-based ranks of |d|, doubled so tied ranks stay integral.
std::vector<std::int64_t> doubled_ranks(const std::vector<double>& magnitudes, double& tie_term) {
    const std::size_t n = magnitudes.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return magnitudes[a] < magnitudes[b]; });
    std::vector<std::int64_t> ranks(n);
    tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
        // positions i..j hold ranks i+1..j+1; doubled average is i+j+2
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = static_cast<std::int64_t>(i + j + 2);
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("wilcoxon: samples differ in length");
    if (xs.empty()) throw std::invalid_argument("wilcoxon: empty samples");

    std::vector<double> magnitudes;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - ys[i];
        if (d == 0.0) continue;
        magnitudes.push_back(std::abs(d));
        positive.push_back(d > 0.0);
    }
    if (magnitudes.empty()) throw NoDifferences();

    double tie_term = 0.0;
    const auto ranks = doubled_ranks(magnitudes, tie_term);
    const std::size_t n = ranks.size();
    std::int64_t w2 = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) w2 += ranks[i];

    WilcoxonResult result;
    result.n = n;
    result.w = static_cast<double>(w2) / 2.0;

    if (n <= kExactLimit) {
        // Number of sign assignments per doubled rank sum.
        const std::int64_t total = std::accumulate(ranks.begin(), ranks.end(), std::int64_t{0});
        std::vector<std::uint64_t> ways(static_cast<std::size_t>(total) + 1, 0);
        ways[0] = 1;
        std::int64_t reach = 0;
        for (const auto r : ranks) {
            reach += r;
            for (std::int64_t s = reach; s >= r; --s)
                ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
        }
        std::uint64_t tail = 0;
        for (std::int64_t s = w2; s <= total; ++s) tail += ways[static_cast<std::size_t>(s)];
        result.p = static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n));
        result.exact = true;
        return result;
    }

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) {
        result.p = result.w >= mean ? 0.5 : 1.0;
        return result;
    }
    const double z = (result.w - mean - 0.5) / std::sqrt(var);
    result.p = 0.5 * std::erfc(z / std::sqrt(2.0));
    return result;
}

double vargha_delaney_a12(std::span<const double> xs, std::span<const double> ys) {
    if (xs.empty() || ys.empty()) throw std::invalid_argument("a12: empty sample");
    std::vector<double> sorted(ys.begin(), ys.end());
    std::sort(sorted.begin(), sorted.end());
    // 2 * (#greater) + #equal, kept integral so the ratio is exact
    std::uint64_t score = 0;
    for (const double x : xs) {
        const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x);
        const auto hi = std::upper_bound(lo, sorted.end(), x);
        score += 2 * static_cast<std::uint64_t>(lo - sorted.begin()) + static_cast<std::uint64_t>(hi - lo);
    }
    return static_cast<double>(score) / (2.0 * static_cast<double>(xs.size()) * static_cast<double>(ys.size()));
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    const auto quantile = [&](double q) {
        const double h = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    return s;
}

}  // namespace mergeflow::stats
