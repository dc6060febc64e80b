#pragma once

// Snapshot-delay and throughput protocols comparing queue orderings.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mergeflow/core.hpp"
#include "mergeflow/engine.hpp"
#include "mergeflow/features.hpp"
#include "mergeflow/sched.hpp"
#include "mergeflow/training.hpp"
#include "mergeflow/workload.hpp"

namespace mergeflow::eval {

/// One snapshot per attributable BUILD_FAIL: the pipeline's chain (failing PR
/// included) and its waiting queue at that moment, both in queue order.
std::vector<Snapshot> extract_snapshots(const EventLog& log, const PrTable& prs);

struct DelayResult {
    std::size_t snapshot = 0;
    std::string strategy;
    double rank_strategy = 0.0;
    double mean_rank_fifo = 0.0;
    double delay = 0.0;  // positive: failing PR ranked later than a random order would
};

/// Ranks the snapshot universe with `strategy` at the snapshot time and
/// compares with the failing PR's mean position over `n_shuffles` uniform
/// permutations. Throws std::invalid_argument if the failing PR is absent.
DelayResult snapshot_delay(const Snapshot& snapshot, const PrTable& prs, const sched::Strategy& strategy,
                           std::size_t n_shuffles = 10000, std::uint64_t seed = 0);

/// Model-backed scorer with its own view of the event history. Copies are
/// independent.
class PredictiveScorer {
public:
    PredictiveScorer(const predictor::FailurePredictor& model, const PrTable& prs);

    void observe(const EventRecord& ev) { history_.observe(ev); }
    double score(const PullRequest& pr, PipelineId pipeline, Minutes now) const;

private:
    const predictor::FailurePredictor* model_;
    predictor::HistoryTracker history_;
    mutable std::unordered_map<PrId, int> clusters_;
};

/// A strategy that can be instantiated once per simulated world.
struct StrategySpec {
    sched::StrategyKind kind = sched::StrategyKind::Fifo;
    /// Predictive only; scorer state primed with prior history.
    const PredictiveScorer* scorer = nullptr;

    std::string name() const { return std::string(sched::to_string(kind)); }
};

/// Delay of every snapshot under every strategy, ordered by snapshot then
/// strategy. The FIFO reference for snapshot i uses seed derive(seed, i).
/// Predictive scores see only events before each snapshot time; `primed`
/// supplies the scorer's starting state.
std::vector<DelayResult> evaluate_snapshots(const EventLog& log, const PrTable& prs,
                                            std::span<const Snapshot> snapshots,
                                            std::span<const sched::StrategyKind> strategies,
                                            const PredictiveScorer* primed, std::size_t n_shuffles,
                                            std::uint64_t seed);

struct BusinessHours {
    int start_hour = 9;
    int end_hour = 17;
};

struct ThroughputResult {
    int day = 0;
    std::string strategy;
    std::size_t lookahead = 0;
    int replication = 0;
    std::int64_t merged_count = 0;
};

/// MERGE events with time inside business hours of `day`.
std::int64_t count_business_merges(const EventLog& log, int day, BusinessHours hours);

/// Runs one fresh world per strategy over the day's arrivals. Failed PRs are
/// re-enqueued once behind the day's last arrival.
std::vector<ThroughputResult> simulate_business_day(const PrTable& prs, std::span<const Arrival> arrivals, int day,
                                                    std::span<const StrategySpec> strategies,
                                                    std::size_t lookahead, engine::WorldConfig world,
                                                    BusinessHours hours);

/// Event log of one world under `spec`, advanced to `until`.
EventLog run_world(const PrTable& prs, std::span<const Arrival> arrivals, const StrategySpec& spec,
                   std::size_t lookahead, engine::WorldConfig world, Minutes until);

struct ExperimentConfig {
    workload::WorkloadConfig workload;
    /// JSONL file with PR and arrival records; replaces the generator.
    std::optional<std::filesystem::path> replay;
    /// Leading days whose history trains the model; the rest are evaluated.
    int train_days = 15;
    engine::WorldConfig engine;
    std::vector<sched::StrategyKind> strategies;
    std::vector<std::size_t> lookaheads{5, 10, 15, 20};
    int replications = 10;
    std::uint64_t seed = 1;
    std::size_t shuffles = 10000;
    predictor::FitOptions fit;
    std::filesystem::path output_dir = "results";

    ExperimentConfig();
    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; relative replay paths resolve against
/// `base`.
ExperimentConfig experiment_from_json(const nlohmann::json& doc, const std::filesystem::path& base = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

struct ExperimentResult {
    std::vector<ThroughputResult> throughput;  // (strategy, lookahead, day, replication) order
    std::vector<Snapshot> snapshots;
    std::vector<DelayResult> delays;
    std::vector<predictor::TrainingReport> training;  // one per trained model
    nlohmann::json summary;
};

/// `model` replaces per-replication retraining when given.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const predictor::FailurePredictor* model = nullptr);

std::string throughput_csv(std::span<const ThroughputResult> rows);
std::string delays_csv(std::span<const DelayResult> rows, std::span<const Snapshot> snapshots);

/// Per-strategy delay statistics against the FIFO reference.
nlohmann::json summarize_delays(std::span<const DelayResult> rows);
/// Per (strategy, lookahead) throughput statistics paired with FIFO by day.
nlohmann::json summarize_throughput(std::span<const ThroughputResult> rows);

/// throughput.csv, delays.csv and summary.json.
void write_results(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace mergeflow::eval
