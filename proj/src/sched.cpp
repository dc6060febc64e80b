#include "mergeflow/sched.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace mergeflow::sched {

namespace {

constexpr std::array<std::pair<StrategyKind, std::string_view>, 7> kNames{{
    {StrategyKind::Fifo, "fifo"},
    {StrategyKind::PremergeFailures, "premerge_failures"},
    {StrategyKind::ChangedLines, "changed_lines"},
    {StrategyKind::ChangedFiles, "changed_files"},
    {StrategyKind::LastFailureGap, "last_failure_gap"},
    {StrategyKind::Predictive, "predictive"},
    {StrategyKind::Oracle, "oracle"},
}};

}  // namespace

std::string_view to_string(StrategyKind kind) {
    for (const auto& [k, name] : kNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<StrategyKind> strategy_from_string(std::string_view name) {
    for (const auto& [k, n] : kNames)
        if (n == name) return k;
    return std::nullopt;
}

Strategy Strategy::heuristic(StrategyKind kind) {
    if (kind == StrategyKind::Predictive) throw std::invalid_argument("predictive strategy needs a trained model");
    return Strategy{kind, {}};
}

Strategy Strategy::predictive(Scorer scorer) {
    if (!scorer) throw std::invalid_argument("predictive strategy needs a trained model");
    return Strategy{StrategyKind::Predictive, std::move(scorer)};
}

double strategy_key(const Strategy& strategy, const PullRequest& pr, Minutes now) {
    switch (strategy.kind) {
        case StrategyKind::Fifo:
            return 0.0;
        case StrategyKind::PremergeFailures:
            return static_cast<double>(pr.premerge_failures());
        case StrategyKind::ChangedLines:
            return static_cast<double>(pr.changed_lines());
        case StrategyKind::ChangedFiles:
            return static_cast<double>(pr.changed_files.size());
        case StrategyKind::LastFailureGap: {
            // Larger gap first, so the key is the negated gap. Never failed
            // counts as an infinite gap.
            std::optional<Minutes> last;
            for (const auto& run : pr.premerge_runs)
                if (!run.passed && run.finished_at <= now && (!last || run.finished_at > *last)) last = run.finished_at;
            if (!last) return -std::numeric_limits<double>::infinity();
            return -static_cast<double>(now - *last);
        }
        case StrategyKind::Predictive:
            if (!strategy.scorer) throw std::invalid_argument("predictive strategy needs a trained model");
            return strategy.scorer(pr, now);
        case StrategyKind::Oracle:
            return pr.true_outcome == Outcome::Fail ? 1.0 : 0.0;
    }
    return 0.0;
}

std::vector<PrId> rank(std::span<const PrId> queue, const PrTable& prs, const Strategy& strategy, Minutes now) {
    if (strategy.kind == StrategyKind::Fifo) return {queue.begin(), queue.end()};
    if (strategy.kind == StrategyKind::Predictive && !strategy.scorer)
        throw std::invalid_argument("predictive strategy needs a trained model");

    std::vector<double> keys(queue.size());
    for (std::size_t i = 0; i < queue.size(); ++i) keys[i] = strategy_key(strategy, prs.at(queue[i]), now);
    std::vector<std::size_t> order(queue.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (keys[a] != keys[b]) return keys[a] < keys[b];
        if (a != b) return a < b;
        return queue[a] < queue[b];
    });
    std::vector<PrId> out;
    out.reserve(queue.size());
    for (auto i : order) out.push_back(queue[i]);
    return out;
}

std::vector<PrId> select_next(std::span<const PrId> queue, const PrTable& prs, const Strategy& strategy,
                              LookaheadWindow lookahead, std::size_t k, Minutes now) {
    if (k == 0) throw std::invalid_argument("select_next needs k >= 1");
    if (lookahead.size == 0) throw std::invalid_argument("lookahead window must be at least 1");
    const auto visible = queue.first(std::min(lookahead.size, queue.size()));
    auto ranked = rank(visible, prs, strategy, now);
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

engine::Selector make_selector(const PrTable& prs, Strategy strategy, LookaheadWindow lookahead) {
    return [&prs, strategy = std::move(strategy), lookahead](std::span<const PrId> eligible, std::size_t k,
                                                             Minutes now) {
        return select_next(eligible, prs, strategy, lookahead, k, now);
    };
}

}  // namespace mergeflow::sched
