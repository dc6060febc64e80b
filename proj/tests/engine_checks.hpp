#pragma once

// Engine invariants checked by replaying event logs and by driving a single
// pipeline with random operations. Each check returns an empty string on
// success and a description of the first violation otherwise.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "mergeflow/engine.hpp"
#include "mergeflow/random.hpp"
#include "support.hpp"

namespace mergeflow::testing {

struct LogReplay {
    std::vector<PrId> chain;
    int window = 0;
};

// Window recurrence, chain capacity at every BUILD_START, in-order merges and
// reset locality, reconstructed from the log alone.
inline std::string check_log(const EventLog& log, const engine::WindowPolicy& policy,
                             std::map<PipelineId, LogReplay>& state) {
    const auto fail = [](std::size_t i, const std::string& what) {
        return "event " + std::to_string(i) + ": " + what;
    };
    // Successors of the latest failure that still owe a RESET in that minute.
    std::map<PipelineId, std::pair<Minutes, std::vector<PrId>>> pending;
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& ev = log[i];
        for (const auto& [pipeline, p] : pending)
            if (!p.second.empty() && p.first != ev.time) return fail(i, "successor of a failure was not reset");
        auto [it, fresh] = state.try_emplace(ev.pipeline);
        auto& s = it->second;
        if (fresh) s.window = policy.initial;
        auto pos = std::find(s.chain.begin(), s.chain.end(), ev.pr_id);
        switch (ev.kind) {
            case EventKind::BuildStart:
                if (pos == s.chain.end())
                    s.chain.push_back(ev.pr_id);
                else if (i == 0 || log[i - 1].kind != EventKind::Reschedule || log[i - 1].pr_id != ev.pr_id)
                    return fail(i, "second build start without a reschedule");
                if (s.chain.size() > static_cast<std::size_t>(s.window))
                    return fail(i, "chain of " + std::to_string(s.chain.size()) + " exceeds window " +
                                       std::to_string(s.window));
                break;
            case EventKind::Reschedule:
                if (pos != s.chain.end()) return fail(i, "rescheduled pr still in chain");
                s.chain.push_back(ev.pr_id);
                break;
            case EventKind::Merge:
                if (s.chain.empty() || s.chain.front() != ev.pr_id) return fail(i, "merge out of chain order");
                s.chain.erase(s.chain.begin());
                s.window = std::min(s.window + policy.increase_step, policy.ceiling);
                break;
            case EventKind::BuildFail: {
                if (pos == s.chain.end()) return fail(i, "failing pr not in chain");
                pending[ev.pipeline] = {ev.time, std::vector<PrId>(pos + 1, s.chain.end())};
                s.chain.erase(pos + 1, s.chain.end());
                s.window = std::max(policy.floor, s.window / 2);
                break;
            }
            case EventKind::Reset: {
                // only successors of the failing build may be reset
                auto& p = pending[ev.pipeline].second;
                auto hit = std::find(p.begin(), p.end(), ev.pr_id);
                if (hit == p.end()) return fail(i, "reset hit a pr that did not speculate on the failure");
                if (hit != p.begin()) return fail(i, "successors reset out of chain order");
                p.erase(hit);
                break;
            }
            case EventKind::Dequeue:
                if (pos != s.chain.end()) s.chain.erase(pos);
                break;
            default:
                break;
        }
        if (s.window < policy.floor || s.window > policy.ceiling) return fail(i, "window out of bounds");
    }
    for (const auto& [pipeline, p] : pending)
        if (!p.second.empty()) return "successor of a failure was not reset";
    return {};
}

// Every ENQUEUE ends in exactly one MERGE or DEQUEUE.
inline std::string check_conservation(const EventLog& log) {
    std::map<PrId, int> open;
    for (const auto& ev : log) {
        if (ev.kind == EventKind::Enqueue) ++open[ev.pr_id];
        if (ev.kind == EventKind::Merge || ev.kind == EventKind::Dequeue) --open[ev.pr_id];
    }
    for (const auto& [pr, n] : open)
        if (n != 0) return "pr " + std::to_string(pr) + " has unbalanced enqueue/terminal count " + std::to_string(n);
    return {};
}

// Runs a random world to completion, stepping `advance` in chunks and
// comparing the replayed window with the engine's after every chunk. A null
// `fixed` draws a random window policy.
inline std::string random_world_case(std::uint64_t seed, const engine::WindowPolicy* fixed = nullptr) {
    rnd::Engine rng(seed);
    const auto n = 1 + rnd::index(rng, 30);
    const int pipelines = 1 + static_cast<int>(rnd::index(rng, 3));
    auto prs = random_prs(rng, n, rnd::uniform(rng, 0.0, 0.5), pipelines);
    // Sprinkle dependencies on earlier PRs.
    PrTable with_deps;
    for (auto pr : prs) {
        if (pr.id > 1 && rnd::bernoulli(rng, 0.1))
            pr.depends_on.push_back(1 + static_cast<PrId>(rnd::index(rng, static_cast<std::uint64_t>(pr.id - 1))));
        with_deps.add(std::move(pr));
    }
    engine::WorldConfig config;
    config.pipelines = pipelines;
    const int floor = 1 + static_cast<int>(rnd::index(rng, 8));
    const int ceiling = floor + static_cast<int>(rnd::index(rng, 20));
    config.window = {floor, ceiling, 1 + static_cast<int>(rnd::index(rng, 3)),
                     floor + static_cast<int>(rnd::index(rng, static_cast<std::uint64_t>(ceiling - floor + 1)))};
    if (fixed) config.window = *fixed;
    const auto arrivals = random_arrivals(rng, with_deps, 240);

    engine::World world(with_deps, config, engine::fifo_selector());
    world.schedule(arrivals);
    std::map<PipelineId, LogReplay> state;
    EventLog all;
    for (Minutes t = 0; !world.idle() || t == 0; t += 1 + static_cast<Minutes>(rnd::index(rng, 120))) {
        auto log = world.advance(t);
        if (auto err = check_log(log, config.window, state); !err.empty()) return err;
        for (const auto& [p, s] : state)
            if (world.pipeline(p).window() != s.window)
                return "replayed window " + std::to_string(s.window) + " != engine window " +
                       std::to_string(world.pipeline(p).window());
        all.insert(all.end(), log.begin(), log.end());
        if (t > 1'000'000) return "world did not drain";
    }
    try {
        check_event_log(all);
    } catch (const LogError& e) {
        return e.what();
    }
    return check_conservation(all);
}

// Drives one pipeline with random enqueues, fills and completions and checks
// state-level reset locality, the window recurrence and chain capacity.
inline std::string random_pipeline_case(std::uint64_t seed, const engine::WindowPolicy* fixed = nullptr) {
    rnd::Engine rng(seed);
    const auto prs = random_prs(rng, 40, rnd::uniform(rng, 0.05, 0.6), 1);
    const int floor = 1 + static_cast<int>(rnd::index(rng, 7));
    const engine::WindowPolicy policy =
        fixed ? *fixed : engine::WindowPolicy{floor, floor + static_cast<int>(rnd::index(rng, 20)), 1, floor};
    engine::Pipeline p(0, policy);
    EventLog out;
    PrId next = 1;
    Minutes now = 0;
    const auto steps = 5 + rnd::index(rng, 40);
    for (std::size_t step = 0; step < steps; ++step) {
        const auto action = rnd::index(rng, 3);
        if (action == 0 && next <= 40) {
            p.enqueue(next++, now, out);
        } else if (action == 1) {
            const auto before = p.chain().size();
            p.fill_slots(engine::fifo_selector(), prs, now, out);
            if (p.chain().size() > std::max(before, static_cast<std::size_t>(p.window())))
                return "fill exceeded window";
        } else if (auto due = p.next_completion()) {
            now = *due;
            const auto& chain = p.chain();
            auto it = std::find_if(chain.begin(), chain.end(),
                                   [&](const engine::ActiveBuild& b) { return !b.passed && b.finishes_at == now; });
            const PrId pr = it->pr_id;
            const auto position = static_cast<std::size_t>(it - chain.begin());
            const auto outcome = prs.at(pr).true_outcome;
            const std::vector<engine::ActiveBuild> prefix(chain.begin(), it);
            const int w = p.window();
            out.clear();
            p.on_build_complete(pr, outcome, now, prs, out);
            if (outcome == Outcome::Fail) {
                if (p.window() != std::max(policy.floor, w / 2)) return "failure did not halve the window";
                for (std::size_t i = 0; i < prefix.size(); ++i) {
                    const auto& b = p.chain().at(i);
                    if (b.pr_id != prefix[i].pr_id || b.started_at != prefix[i].started_at ||
                        b.finishes_at != prefix[i].finishes_at || b.attempt != prefix[i].attempt)
                        return "prefix changed by a failure";
                }
                if (p.chain().size() > std::max(position, static_cast<std::size_t>(p.window())))
                    return "restarts exceeded the window";
                if (p.holds(pr)) return "failed pr still held";
            } else {
                const auto merges = std::count_if(out.begin(), out.end(),
                                                  [](const EventRecord& e) { return e.kind == EventKind::Merge; });
                int expect = w;
                for (long i = 0; i < merges; ++i) expect = std::min(expect + policy.increase_step, policy.ceiling);
                if (p.window() != expect) return "merge did not follow the increment rule";
            }
        }
        if (p.window() < policy.floor || p.window() > policy.ceiling) return "window out of bounds";
        for (const auto& b : p.chain())
            if (std::find(p.waiting().begin(), p.waiting().end(), b.pr_id) != p.waiting().end())
                return "pr both waiting and building";
    }
    return {};
}

}  // namespace mergeflow::testing
