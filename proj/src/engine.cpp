#include "mergeflow/engine.hpp"

#include <algorithm>
#include <string>

namespace mergeflow::engine {

void WindowPolicy::validate() const {
    if (floor < 1 || ceiling < 1 || increase_step < 1 || initial < 1)
        throw std::invalid_argument("window policy values must be positive");
    if (floor > initial || initial > ceiling)
        throw std::invalid_argument("window policy requires floor <= initial <= ceiling");
}

int WindowPolicy::after_merge(int window) const { return std::min(window + increase_step, ceiling); }

int WindowPolicy::after_failure(int window) const { return std::max(floor, window / 2); }

Selector fifo_selector() {
    return [](std::span<const PrId> eligible, std::size_t k, Minutes) {
        const auto n = std::min(k, eligible.size());
        return std::vector<PrId>(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n));
    };
}

Pipeline::Pipeline(PipelineId id, WindowPolicy policy) : id_(id), policy_(policy), window_(policy.initial) {
    policy_.validate();
}

bool Pipeline::holds(PrId pr) const {
    return std::any_of(chain_.begin(), chain_.end(), [&](const ActiveBuild& b) { return b.pr_id == pr; }) ||
           std::find(waiting_.begin(), waiting_.end(), pr) != waiting_.end();
}

int Pipeline::attempts(PrId pr) const {
    auto it = attempts_.find(pr);
    return it == attempts_.end() ? 0 : it->second;
}

void Pipeline::enqueue(PrId pr, Minutes time, EventLog& out) {
    if (holds(pr)) throw EngineError("pr " + std::to_string(pr) + " is already queued in pipeline " + std::to_string(id_));
    waiting_.push_back(pr);
    clock_ = std::max(clock_, time);
    out.push_back({EventKind::Enqueue, pr, id_, time, std::nullopt});
}

void Pipeline::start_build(PrId pr, const PrTable& prs, Minutes time, EventLog& out) {
    const int attempt = ++attempts_[pr];
    chain_.push_back({pr, time, time + prs.at(pr).build_minutes(), attempt, false});
    out.push_back({EventKind::BuildStart, pr, id_, time, std::nullopt});
}

void Pipeline::fill_slots(const Selector& select, const PrTable& prs, Minutes time, EventLog& out,
                          const std::function<bool(PrId)>& eligible) {
    clock_ = std::max(clock_, time);
    while (chain_.size() < static_cast<std::size_t>(window_) && !waiting_.empty()) {
        std::vector<PrId> candidates;
        candidates.reserve(waiting_.size());
        for (PrId id : waiting_)
            if (!eligible || eligible(id)) candidates.push_back(id);
        if (candidates.empty()) return;
        const std::size_t free = static_cast<std::size_t>(window_) - chain_.size();
        auto picked = select(candidates, free, time);
        if (picked.empty()) return;
        if (picked.size() > free) picked.resize(free);
        for (PrId id : picked) {
            auto it = std::find(waiting_.begin(), waiting_.end(), id);
            if (it == waiting_.end() || std::find(candidates.begin(), candidates.end(), id) == candidates.end())
                throw EngineError("selector returned pr " + std::to_string(id) + " which is not eligible");
            waiting_.erase(it);
            start_build(id, prs, time, out);
        }
    }
}

void Pipeline::on_build_complete(PrId pr, Outcome outcome, Minutes time, const PrTable& prs, EventLog& out) {
    auto it = std::find_if(chain_.begin(), chain_.end(), [&](const ActiveBuild& b) { return b.pr_id == pr; });
    if (it == chain_.end()) throw EngineError("pr " + std::to_string(pr) + " is not in the chain");
    if (it->passed || it->finishes_at != time)
        throw EngineError("pr " + std::to_string(pr) + " does not finish at " + std::to_string(time));
    clock_ = std::max(clock_, time);

    if (outcome == Outcome::Pass) {
        it->passed = true;
        out.push_back({EventKind::BuildPass, pr, id_, time, std::nullopt});
        // Merges are released strictly in chain order.
        while (!chain_.empty() && chain_.front().passed) {
            out.push_back({EventKind::Merge, chain_.front().pr_id, id_, time, std::nullopt});
            chain_.erase(chain_.begin());
            window_ = policy_.after_merge(window_);
        }
        return;
    }

    out.push_back({EventKind::BuildFail, pr, id_, time, std::nullopt});
    out.push_back({EventKind::Dequeue, pr, id_, time, std::nullopt});
    const auto position = static_cast<std::size_t>(it - chain_.begin());
    std::vector<ActiveBuild> successors(chain_.begin() + static_cast<std::ptrdiff_t>(position) + 1, chain_.end());
    chain_.resize(position);
    window_ = policy_.after_failure(window_);

    // Successors restart on the surviving prefix while the shrunken window has
    // room; the remainder goes back to the head of the queue in chain order.
    std::vector<PrId> returned;
    for (const auto& build : successors) {
        out.push_back({EventKind::Reset, build.pr_id, id_, time, pr});
        if (chain_.size() < static_cast<std::size_t>(window_)) {
            out.push_back({EventKind::Reschedule, build.pr_id, id_, time, pr});
            start_build(build.pr_id, prs, time, out);
        } else {
            returned.push_back(build.pr_id);
        }
    }
    waiting_.insert(waiting_.begin(), returned.begin(), returned.end());
}

bool Pipeline::dequeue_waiting(PrId pr, Minutes time, std::optional<PrId> caused_by, EventLog& out) {
    auto it = std::find(waiting_.begin(), waiting_.end(), pr);
    if (it == waiting_.end()) return false;
    waiting_.erase(it);
    out.push_back({EventKind::Dequeue, pr, id_, time, caused_by});
    return true;
}

std::optional<Minutes> Pipeline::next_completion() const {
    std::optional<Minutes> best;
    for (const auto& b : chain_)
        if (!b.passed && (!best || b.finishes_at < *best)) best = b.finishes_at;
    return best;
}

World::World(const PrTable& prs, WorldConfig config, Selector selector)
    : prs_(prs), config_(config), selector_(std::move(selector)) {
    if (config_.pipelines < 1) throw std::invalid_argument("world needs at least one pipeline");
    for (int i = 0; i < config_.pipelines; ++i) pipelines_.emplace_back(i, config_.window);
}

PipelineId World::pipeline_of(const PullRequest& pr) const { return pr.change_queue % config_.pipelines; }

bool World::idle() const {
    if (!pending_.empty()) return false;
    return std::all_of(pipelines_.begin(), pipelines_.end(),
                       [](const Pipeline& p) { return p.chain().empty() && p.waiting().empty(); });
}

void World::schedule(std::span<const Arrival> arrivals) {
    for (const auto& a : arrivals) {
        const auto& pr = prs_.at(a.pr_id);
        if (a.time < clock_) throw EngineError("arrival of pr " + std::to_string(a.pr_id) + " is in the past");
        pending_.emplace(a.time, pipeline_of(pr), a.pr_id);
        scheduled_.insert(a.pr_id);
        last_arrival_ = std::max(last_arrival_, a.time);
    }
}

bool World::dependencies_met(PrId pr) const {
    for (PrId dep : prs_.at(pr).depends_on)
        if (scheduled_.contains(dep) && !merged_.contains(dep)) return false;
    return true;
}

std::optional<PrId> World::dropped_dependency(const PullRequest& pr) const {
    for (PrId dep : pr.depends_on)
        if (dropped_.contains(dep)) return dep;
    return std::nullopt;
}

void World::emit(EventLog& buffer, EventLog& out) {
    for (const auto& ev : buffer) {
        if (ev.kind == EventKind::Merge) merged_.insert(ev.pr_id);
        if (observer_) observer_(ev);
        out.push_back(ev);
    }
    buffer.clear();
}

void World::arrive(PrId pr, Minutes time, EventLog& buffer) {
    const auto& request = prs_.at(pr);
    auto& pipeline = pipelines_[static_cast<std::size_t>(pipeline_of(request))];
    pipeline.enqueue(pr, time, buffer);
    dropped_.erase(pr);
    if (auto dep = dropped_dependency(request)) {
        pipeline.dequeue_waiting(pr, time, dep, buffer);
        dropped_.insert(pr);
        drop_dependents(time, buffer);
    }
}

void World::drop_dependents(Minutes time, EventLog& buffer) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto& pipeline : pipelines_) {
            const auto waiting = pipeline.waiting();
            for (PrId id : waiting) {
                if (auto dep = dropped_dependency(prs_.at(id))) {
                    pipeline.dequeue_waiting(id, time, dep, buffer);
                    dropped_.insert(id);
                    changed = true;
                }
            }
        }
    }
}

void World::after_failure(PrId pr, Minutes time, EventLog& buffer) {
    dropped_.insert(pr);
    drop_dependents(time, buffer);
    if (config_.requeue_failed_once && requeued_.insert(pr).second) {
        const auto& request = prs_.at(pr);
        pending_.emplace(std::max(time, last_arrival_), pipeline_of(request), pr);
    }
}

EventLog World::advance(Minutes until) {
    EventLog out;
    EventLog buffer;
    // Same-minute ordering key: (pipeline, kind rank, pr). Rank 0 = fail,
    // 1 = pass, 2 = arrival.
    std::vector<std::tuple<PipelineId, int, PrId>> actions;
    const auto eligible = [this](PrId id) { return dependencies_met(id); };

    while (true) {
        std::optional<Minutes> next;
        if (!pending_.empty()) next = std::get<0>(*pending_.begin());
        for (const auto& p : pipelines_)
            if (auto t = p.next_completion(); t && (!next || *t < *next)) next = t;
        if (!next || *next > until) break;
        const Minutes now = *next;

        actions.clear();
        for (const auto& p : pipelines_)
            for (const auto& b : p.chain())
                if (!b.passed && b.finishes_at == now)
                    actions.emplace_back(p.id(), prs_.at(b.pr_id).true_outcome == Outcome::Fail ? 0 : 1, b.pr_id);
        while (!pending_.empty() && std::get<0>(*pending_.begin()) == now) {
            const auto [t, pipeline, pr] = *pending_.begin();
            pending_.erase(pending_.begin());
            actions.emplace_back(pipeline, 2, pr);
        }
        std::sort(actions.begin(), actions.end());

        for (const auto& [pipeline_id, rank, pr] : actions) {
            auto& pipeline = pipelines_[static_cast<std::size_t>(pipeline_id)];
            if (rank == 2) {
                arrive(pr, now, buffer);
            } else {
                // An earlier failure in this minute may have cancelled the build.
                const auto& chain = pipeline.chain();
                const bool live = std::any_of(chain.begin(), chain.end(), [&](const ActiveBuild& b) {
                    return b.pr_id == pr && !b.passed && b.finishes_at == now;
                });
                if (!live) continue;
                const Outcome outcome = rank == 0 ? Outcome::Fail : Outcome::Pass;
                pipeline.on_build_complete(pr, outcome, now, prs_, buffer);
                if (outcome == Outcome::Fail) after_failure(pr, now, buffer);
            }
            emit(buffer, out);
        }
        for (auto& p : pipelines_) {
            p.fill_slots(selector_, prs_, now, buffer, eligible);
            emit(buffer, out);
        }
        clock_ = now;
    }
    clock_ = std::max(clock_, until);
    for (auto& p : pipelines_) p.set_clock(std::max(p.clock(), clock_));
    return out;
}

}  // namespace mergeflow::engine
