#pragma once

// Discrete-event model of speculative merge pipelines.
//
// Each pipeline keeps a chain of active builds. The build at chain position i
// is tested on mainline plus positions 0..i-1, assuming they all pass. A
// failure at position i cancels and restarts every later position; earlier
// positions are untouched. The concurrency limit (window) grows additively on
// every merge and halves on every failure, clamped to [floor, ceiling].

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "mergeflow/core.hpp"

namespace mergeflow::engine {

class EngineError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct WindowPolicy {
    int floor = 7;
    int ceiling = 25;
    int increase_step = 1;
    int initial = 7;

    void validate() const;
    int after_merge(int window) const;
    int after_failure(int window) const;

    bool operator==(const WindowPolicy&) const = default;
};

struct ActiveBuild {
    PrId pr_id = 0;
    Minutes started_at = 0;
    Minutes finishes_at = 0;
    int attempt = 1;
    bool passed = false;  // finished successfully, waiting for predecessors to merge
};

/// Chooses up to k PRs from the eligible part of the waiting queue, which is
/// given in arrival order. Every returned id must be in `eligible`.
using Selector = std::function<std::vector<PrId>(std::span<const PrId> eligible, std::size_t k, Minutes now)>;

Selector fifo_selector();

class Pipeline {
public:
    Pipeline(PipelineId id, WindowPolicy policy);

    PipelineId id() const { return id_; }
    const WindowPolicy& policy() const { return policy_; }
    const std::vector<ActiveBuild>& chain() const { return chain_; }
    const std::vector<PrId>& waiting() const { return waiting_; }
    int window() const { return window_; }
    Minutes clock() const { return clock_; }
    void set_clock(Minutes t) { clock_ = t; }

    bool holds(PrId pr) const;
    /// Number of builds started for `pr` in this pipeline so far.
    int attempts(PrId pr) const;

    /// Appends to the waiting queue. Throws EngineError on duplicates.
    void enqueue(PrId pr, Minutes time, EventLog& out);

    /// Starts builds until the chain is full or nothing eligible is waiting.
    /// `eligible` filters the waiting queue (all PRs when empty).
    void fill_slots(const Selector& select, const PrTable& prs, Minutes time, EventLog& out,
                    const std::function<bool(PrId)>& eligible = {});

    /// Applies a finished build. Throws EngineError when `pr` is not an
    /// unfinished chain member due at `time`.
    void on_build_complete(PrId pr, Outcome outcome, Minutes time, const PrTable& prs, EventLog& out);

    /// Drops a waiting PR (dependency casualty). Returns false if not waiting.
    bool dequeue_waiting(PrId pr, Minutes time, std::optional<PrId> caused_by, EventLog& out);

    /// Earliest finish time among unfinished chain builds.
    std::optional<Minutes> next_completion() const;

private:
    void start_build(PrId pr, const PrTable& prs, Minutes time, EventLog& out);

    PipelineId id_;
    WindowPolicy policy_;
    std::vector<ActiveBuild> chain_;
    std::vector<PrId> waiting_;
    int window_;
    Minutes clock_ = 0;
    std::map<PrId, int> attempts_;
};

struct WorldConfig {
    int pipelines = 3;
    WindowPolicy window;
    /// Re-enqueue a failed PR once, behind every scheduled arrival.
    bool requeue_failed_once = false;
};

/// Several independent pipelines fed by one arrival schedule. PRs go to
/// pipeline `change_queue % pipelines`.
///
/// Same-minute events are processed in (pipeline, BUILD_FAIL < BUILD_PASS <
/// ENQUEUE, pr id) order; free slots are filled after all of them.
class World {
public:
    World(const PrTable& prs, WorldConfig config, Selector selector);

    void schedule(std::span<const Arrival> arrivals);
    /// Runs every event with time <= until and returns the events emitted.
    EventLog advance(Minutes until);

    /// Called for each event as it is emitted, before the next decision.
    void set_observer(std::function<void(const EventRecord&)> observer) { observer_ = std::move(observer); }

    const Pipeline& pipeline(PipelineId id) const { return pipelines_.at(static_cast<std::size_t>(id)); }
    int pipeline_count() const { return static_cast<int>(pipelines_.size()); }
    PipelineId pipeline_of(const PullRequest& pr) const;
    Minutes clock() const { return clock_; }
    bool idle() const;

private:
    void emit(EventLog& buffer, EventLog& out);
    void arrive(PrId pr, Minutes time, EventLog& buffer);
    void after_failure(PrId pr, Minutes time, EventLog& buffer);
    void drop_dependents(Minutes time, EventLog& buffer);
    bool dependencies_met(PrId pr) const;
    std::optional<PrId> dropped_dependency(const PullRequest& pr) const;

    const PrTable& prs_;
    WorldConfig config_;
    Selector selector_;
    std::vector<Pipeline> pipelines_;
    std::set<std::tuple<Minutes, PipelineId, PrId>> pending_;
    std::unordered_set<PrId> scheduled_;
    std::unordered_set<PrId> merged_;
    std::unordered_set<PrId> dropped_;
    std::unordered_set<PrId> requeued_;
    Minutes last_arrival_ = 0;
    Minutes clock_ = 0;
    std::function<void(const EventRecord&)> observer_;
};

}  // namespace mergeflow::engine
