#pragma once

// Ordering strategies for the waiting queue.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mergeflow/core.hpp"
#include "mergeflow/engine.hpp"

namespace mergeflow::sched {

enum class StrategyKind {
    Fifo,
    PremergeFailures,
    ChangedLines,
    ChangedFiles,
    LastFailureGap,
    Predictive,
    // Ranks by ground truth. Evaluation reference only.
    Oracle,
};

std::string_view to_string(StrategyKind kind);
std::optional<StrategyKind> strategy_from_string(std::string_view name);

/// Failure score for one PR at time `now`; lower means more likely to pass.
using Scorer = std::function<double(const PullRequest& pr, Minutes now)>;

struct Strategy {
    StrategyKind kind = StrategyKind::Fifo;
    Scorer scorer;  // Predictive only

    static Strategy fifo() { return {}; }
    static Strategy heuristic(StrategyKind kind);
    /// Throws std::invalid_argument when `scorer` is empty.
    static Strategy predictive(Scorer scorer);

    std::string name() const { return std::string(to_string(kind)); }
};

/// Sort key of `pr` under a non-FIFO strategy; ascending is better.
double strategy_key(const Strategy& strategy, const PullRequest& pr, Minutes now);

/// Ranks `queue` (arrival order) best first. Ties keep arrival order, then
/// lower pr id. Throws std::invalid_argument for a predictive strategy
/// without a scorer.
std::vector<PrId> rank(std::span<const PrId> queue, const PrTable& prs, const Strategy& strategy, Minutes now);

struct LookaheadWindow {
    std::size_t size = 1;
};

/// Ranks only the first `lookahead.size` arrivals and returns the best `k`.
std::vector<PrId> select_next(std::span<const PrId> queue, const PrTable& prs, const Strategy& strategy,
                              LookaheadWindow lookahead, std::size_t k, Minutes now);

/// Adapts a strategy into an engine selector. `prs` must outlive the result.
engine::Selector make_selector(const PrTable& prs, Strategy strategy, LookaheadWindow lookahead);

}  // namespace mergeflow::sched
