#pragma once

// Data-parallel inner loops. Each kernel has a serial reference version that
// tests compare against; the OpenMP versions produce bit-identical results
// for any thread count.

#include <cstdint>
#include <span>
#include <vector>

namespace mergeflow::kernels {

struct GradPair {
    double grad = 0.0;
    double hess = 0.0;

    bool operator==(const GradPair&) const = default;
};

/// Feature-major bin codes: bin of row i for feature f is codes[f * rows + i].
struct BinnedMatrix {
    std::size_t rows = 0;
    std::size_t features = 0;
    std::vector<std::uint16_t> codes;
    std::vector<std::size_t> offsets;  // first histogram slot per feature; size features + 1

    std::size_t total_bins() const { return offsets.empty() ? 0 : offsets.back(); }
    std::uint16_t code(std::size_t feature, std::size_t row) const { return codes[feature * rows + row]; }
};

/// Accumulates per-bin gradient sums of `rows` for each listed feature into
/// `out` (size total_bins, zeroed first for those features).
void histogram_serial(const BinnedMatrix& bins, std::span<const std::uint32_t> rows, std::span<const GradPair> gpair,
                      std::span<const int> features, std::span<GradPair> out);
void histogram_parallel(const BinnedMatrix& bins, std::span<const std::uint32_t> rows,
                        std::span<const GradPair> gpair, std::span<const int> features, std::span<GradPair> out);

/// Average 1-based position of item `target` over `shuffles` uniform
/// permutations of `count` items. Shuffles are drawn in fixed blocks, each
/// with its own stream derived from `seed`.
double mean_shuffled_rank_serial(std::size_t count, std::size_t target, std::size_t shuffles, std::uint64_t seed);
double mean_shuffled_rank_parallel(std::size_t count, std::size_t target, std::size_t shuffles, std::uint64_t seed);

/// Threads OpenMP will use; 1 without OpenMP.
int max_threads();

}  // namespace mergeflow::kernels
