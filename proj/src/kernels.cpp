#include "mergeflow/kernels.hpp"

#include <algorithm>
#include <numeric>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "mergeflow/random.hpp"

namespace mergeflow::kernels {

namespace {

constexpr std::size_t kShuffleBlock = 256;

void accumulate_feature(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
                        std::span<const GradPair> gpair, int feature, std::span<GradPair> out) {
    const auto f = static_cast<std::size_t>(feature);
    const std::size_t base = bins.offsets[f];
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(base),
              out.begin() + static_cast<std::ptrdiff_t>(bins.offsets[f + 1]), GradPair{});
    const std::uint16_t* column = bins.codes.data() + f * bins.rows;
    for (std::uint32_t r : rows) {
        auto& slot = out[base + column[r]];
        slot.grad += gpair[r].grad;
        slot.hess += gpair[r].hess;
    }
}

// Sum of 1-based ranks of `target` over shuffles [begin, end) of one block.
double block_rank_sum(std::size_t count, std::size_t target, std::size_t block, std::size_t n, std::uint64_t seed) {
    rnd::Engine rng(rnd::derive(seed, block));
    std::vector<std::size_t> perm(count);
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rnd::shuffle(std::span<std::size_t>(perm), rng);
        const auto pos = static_cast<std::size_t>(std::find(perm.begin(), perm.end(), target) - perm.begin());
        sum += static_cast<double>(pos + 1);
    }
    return sum;
}

}  // namespace

void histogram_serial(const BinnedMatrix& bins, std::span<const std::uint32_t> rows, std::span<const GradPair> gpair,
                      std::span<const int> features, std::span<GradPair> out) {
    for (int f : features) accumulate_feature(bins, rows, gpair, f, out);
}

void histogram_parallel(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
                        std::span<const GradPair> gpair, std::span<const int> features, std::span<GradPair> out) {
    const auto n = static_cast<std::ptrdiff_t>(features.size());
    // Features own disjoint slot ranges, so no reduction is needed.
#pragma omp parallel for schedule(static) if (rows.size() * features.size() > 20000)
    for (std::ptrdiff_t i = 0; i < n; ++i) accumulate_feature(bins, rows, gpair, features[static_cast<std::size_t>(i)], out);
}

double mean_shuffled_rank_serial(std::size_t count, std::size_t target, std::size_t shuffles, std::uint64_t seed) {
    if (count == 0 || shuffles == 0) return 0.0;
    const std::size_t blocks = (shuffles + kShuffleBlock - 1) / kShuffleBlock;
    double total = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t n = std::min(kShuffleBlock, shuffles - b * kShuffleBlock);
        total += block_rank_sum(count, target, b, n, seed);
    }
    return total / static_cast<double>(shuffles);
}

double mean_shuffled_rank_parallel(std::size_t count, std::size_t target, std::size_t shuffles, std::uint64_t seed) {
    if (count == 0 || shuffles == 0) return 0.0;
    const std::size_t blocks = (shuffles + kShuffleBlock - 1) / kShuffleBlock;
    std::vector<double> partial(blocks, 0.0);
    const auto nblocks = static_cast<std::ptrdiff_t>(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
        const auto block = static_cast<std::size_t>(b);
        const std::size_t n = std::min(kShuffleBlock, shuffles - block * kShuffleBlock);
        partial[block] = block_rank_sum(count, target, block, n, seed);
    }
    // Reduce in block order so the sum matches the serial version exactly.
    double total = 0.0;
    for (double p : partial) total += p;
    return total / static_cast<double>(shuffles);
}

int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace mergeflow::kernels
