#include "mergeflow/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <unordered_set>
#include <utility>

namespace mergeflow {

std::int64_t PullRequest::premerge_failures() const {
    return std::count_if(premerge_runs.begin(), premerge_runs.end(),
                         [](const PremergeRun& r) { return !r.passed; });
}

Minutes PullRequest::build_minutes() const {
    return std::max<Minutes>(1, std::llround(build_duration));
}

std::vector<std::string> validate_pull_request(const PullRequest& pr) {
    std::vector<std::string> out;
    if (pr.additions < 0) out.emplace_back("additions must be >= 0");
    if (pr.deletions < 0) out.emplace_back("deletions must be >= 0");
    if (pr.comments < 0) out.emplace_back("comments must be >= 0");
    if (pr.commits < 0) out.emplace_back("commits must be >= 0");
    if (pr.reviews < 0) out.emplace_back("reviews must be >= 0");
    if (!(pr.build_duration > 0.0) || !std::isfinite(pr.build_duration))
        out.emplace_back("build_duration must be > 0");
    if (pr.change_queue < 0) out.emplace_back("change_queue must be >= 0");
    if (std::find(pr.depends_on.begin(), pr.depends_on.end(), pr.id) != pr.depends_on.end())
        out.emplace_back("depends_on contains self-reference");
    std::unordered_set<PrId> seen;
    for (PrId dep : pr.depends_on) {
        if (!seen.insert(dep).second) {
            out.emplace_back("depends_on contains duplicates");
            break;
        }
    }
    for (const auto& run : pr.premerge_runs) {
        if (!(run.duration > 0.0) || !std::isfinite(run.duration)) {
            out.emplace_back("premerge_runs duration must be > 0");
            break;
        }
    }
    return out;
}

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 8> kEventNames{{
    {EventKind::Enqueue, "ENQUEUE"},
    {EventKind::BuildStart, "BUILD_START"},
    {EventKind::BuildPass, "BUILD_PASS"},
    {EventKind::BuildFail, "BUILD_FAIL"},
    {EventKind::Merge, "MERGE"},
    {EventKind::Reset, "RESET"},
    {EventKind::Reschedule, "RESCHEDULE"},
    {EventKind::Dequeue, "DEQUEUE"},
}};

}  // namespace

std::string_view to_string(EventKind kind) {
    for (const auto& [k, name] : kEventNames)
        if (k == kind) return name;
    return "UNKNOWN";
}

std::optional<EventKind> event_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kEventNames)
        if (n == name) return k;
    return std::nullopt;
}

void check_event_log(const EventLog& log) {
    // Builds started and not yet finished, keyed by (pipeline, pr).
    std::set<std::pair<PipelineId, PrId>> open_builds;
    std::map<PrId, Minutes> last_fail;
    Minutes prev = log.empty() ? 0 : log.front().time;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& ev = log[i];
        const std::string where = "event " + std::to_string(i) + " (pr " + std::to_string(ev.pr_id) + ")";
        if (ev.time < prev) throw LogError(where + ": time goes backwards");
        prev = ev.time;
        const auto key = std::make_pair(ev.pipeline, ev.pr_id);
        switch (ev.kind) {
            case EventKind::BuildStart:
                open_builds.insert(key);
                break;
            case EventKind::BuildPass:
            case EventKind::BuildFail:
                if (open_builds.erase(key) == 0)
                    throw LogError(where + ": " + std::string(to_string(ev.kind)) +
                                   " without matching BUILD_START");
                if (ev.kind == EventKind::BuildFail) last_fail[ev.pr_id] = ev.time;
                break;
            case EventKind::Reset: {
                if (!ev.caused_by) throw LogError(where + ": RESET without caused_by");
                auto it = last_fail.find(*ev.caused_by);
                if (it == last_fail.end() || it->second != ev.time)
                    throw LogError(where + ": RESET caused_by " + std::to_string(*ev.caused_by) +
                                   " has no BUILD_FAIL at the same time");
                open_builds.erase(key);
                break;
            }
            case EventKind::Dequeue:
                open_builds.erase(key);
                break;
            default:
                break;
        }
    }
}

std::vector<PrId> Snapshot::universe() const {
    std::vector<PrId> out = processing;
    out.insert(out.end(), waiting.begin(), waiting.end());
    return out;
}

std::vector<std::string> validate_snapshot(const Snapshot& snapshot) {
    std::vector<std::string> out;
    std::unordered_set<PrId> processing(snapshot.processing.begin(), snapshot.processing.end());
    for (PrId id : snapshot.waiting)
        if (processing.contains(id)) {
            out.emplace_back("processing and waiting overlap");
            break;
        }
    const auto count = std::count(snapshot.processing.begin(), snapshot.processing.end(), snapshot.failing_pr) +
                       std::count(snapshot.waiting.begin(), snapshot.waiting.end(), snapshot.failing_pr);
    if (count != 1) out.emplace_back("failing_pr must appear exactly once");
    return out;
}

PrTable::PrTable(std::vector<PullRequest> prs) {
    prs_.reserve(prs.size());
    for (auto& pr : prs) add(std::move(pr));
}

void PrTable::add(PullRequest pr) {
    if (index_.contains(pr.id)) throw std::invalid_argument("duplicate pull request id " + std::to_string(pr.id));
    index_.emplace(pr.id, prs_.size());
    prs_.push_back(std::move(pr));
}

const PullRequest& PrTable::at(PrId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("unknown pull request id " + std::to_string(id));
    return prs_[it->second];
}

const PullRequest* PrTable::find(PrId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &prs_[it->second];
}

}  // namespace mergeflow
