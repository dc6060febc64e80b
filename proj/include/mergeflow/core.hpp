#pragma once

// Domain types shared by every mergeflow module.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mergeflow {

/// Simulated time in whole minutes since the start of the simulated world.
using Minutes = std::int64_t;
using PrId = std::int64_t;
using PipelineId = int;

inline constexpr Minutes kMinutesPerHour = 60;
inline constexpr Minutes kMinutesPerDay = 24 * kMinutesPerHour;

enum class Outcome { Pass, Fail };

struct PremergeRun {
    Minutes finished_at = 0;
    bool passed = true;
    double duration = 1.0;  // minutes

    bool operator==(const PremergeRun&) const = default;
};

struct PullRequest {
    PrId id = 0;
    Minutes created_at = 0;
    std::int64_t additions = 0;
    std::int64_t deletions = 0;
    std::vector<std::string> changed_files;
    std::int64_t comments = 0;
    std::int64_t commits = 0;
    std::int64_t reviews = 0;
    std::vector<PrId> depends_on;
    bool is_cyclic_dependent = false;
    PipelineId change_queue = 0;
    std::vector<PremergeRun> premerge_runs;
    // Ground truth for the simulator and oracles only. Schedulers and the
    // predictor never read these two fields.
    Outcome true_outcome = Outcome::Pass;
    double build_duration = 60.0;  // minutes

    bool operator==(const PullRequest&) const = default;

    std::int64_t premerge_failures() const;
    std::int64_t changed_lines() const { return additions + deletions; }
    /// Engine build time: duration rounded to whole minutes, at least one.
    Minutes build_minutes() const;
};

/// Returns one message per broken invariant; empty when the PR is well formed.
std::vector<std::string> validate_pull_request(const PullRequest& pr);

enum class EventKind {
    Enqueue,
    BuildStart,
    BuildPass,
    BuildFail,
    Merge,
    Reset,
    Reschedule,
    Dequeue,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view name);

struct EventRecord {
    EventKind kind = EventKind::Enqueue;
    PrId pr_id = 0;
    PipelineId pipeline = 0;
    Minutes time = 0;
    std::optional<PrId> caused_by;

    bool operator==(const EventRecord&) const = default;
};

using EventLog = std::vector<EventRecord>;

/// Thrown when an event log breaks ordering or pairing rules.
class LogError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Single pass over the log: non-decreasing time, BUILD_PASS/BUILD_FAIL
/// preceded by a BUILD_START for the same PR and pipeline, RESET caused by a
/// PR whose BUILD_FAIL is recorded at the same time. Throws LogError naming
/// the offending PR.
void check_event_log(const EventLog& log);

/// A PR entering the merge queue at a given time.
struct Arrival {
    Minutes time = 0;
    PrId pr_id = 0;

    bool operator==(const Arrival&) const = default;
};

struct Snapshot {
    PrId failing_pr = 0;
    std::vector<PrId> processing;
    std::vector<PrId> waiting;
    Minutes time = 0;
    PipelineId pipeline = 0;

    /// processing followed by waiting; the ranking universe for the snapshot.
    std::vector<PrId> universe() const;
};

std::vector<std::string> validate_snapshot(const Snapshot& snapshot);

/// Pull requests indexed by id. Insertion order is preserved for iteration.
class PrTable {
public:
    PrTable() = default;
    explicit PrTable(std::vector<PullRequest> prs);

    void add(PullRequest pr);
    const PullRequest& at(PrId id) const;
    const PullRequest* find(PrId id) const;
    bool contains(PrId id) const { return index_.contains(id); }
    std::size_t size() const { return prs_.size(); }
    bool empty() const { return prs_.empty(); }

    auto begin() const { return prs_.begin(); }
    auto end() const { return prs_.end(); }
    const std::vector<PullRequest>& items() const { return prs_; }

private:
    std::vector<PullRequest> prs_;
    std::unordered_map<PrId, std::size_t> index_;
};

}  // namespace mergeflow
