#include <doctest.h>

#include <algorithm>

#include "engine_checks.hpp"
#include "mergeflow/engine.hpp"
#include "support.hpp"

using namespace mergeflow;
using namespace mergeflow::engine;
using mergeflow::testing::all_at;
using mergeflow::testing::make_pr;
using K = EventKind;

namespace {

std::vector<PrId> chain_ids(const Pipeline& p) {
    std::vector<PrId> out;
    for (const auto& b : p.chain()) out.push_back(b.pr_id);
    return out;
}

std::vector<EventKind> kinds(const EventLog& log) {
    std::vector<EventKind> out;
    for (const auto& e : log) out.push_back(e.kind);
    return out;
}

PrTable table(std::initializer_list<PrId> ids) {
    PrTable prs;
    for (auto id : ids) prs.add(make_pr(id));
    return prs;
}

}  // namespace

TEST_CASE("window recurrence table") {
    const WindowPolicy w;
    CHECK(w.initial == 7);
    // independent recurrence: halve to floor, add one up to ceiling
    for (int v = w.floor; v <= w.ceiling; ++v) {
        CHECK(w.after_failure(v) == std::max(7, v / 2));
        CHECK(w.after_merge(v) == std::min(25, v + 1));
    }
    CHECK(w.after_failure(20) == 10);
    CHECK(w.after_merge(24) == 25);
    CHECK(w.after_merge(25) == 25);
    CHECK(w.after_failure(13) == 7);
    CHECK_THROWS(WindowPolicy{0, 5, 1, 1}.validate());
    CHECK_THROWS(WindowPolicy{5, 4, 1, 5}.validate());
    CHECK_THROWS(WindowPolicy{2, 5, 1, 9}.validate());
}

TEST_CASE("enqueue") {
    Pipeline p(0, {});
    EventLog out;
    p.enqueue(1, 0, out);
    CHECK(p.waiting() == std::vector<PrId>{1});
    p.enqueue(2, 0, out);
    CHECK(p.waiting() == std::vector<PrId>{1, 2});
    CHECK_THROWS_AS(p.enqueue(1, 0, out), EngineError);
    CHECK(kinds(out) == std::vector<EventKind>{K::Enqueue, K::Enqueue});
}

TEST_CASE("fill_slots") {
    const auto prs = table({1, 2, 3, 4});
    EventLog out;
    SUBCASE("window 3 takes the first three") {
        Pipeline p(0, {3, 3, 1, 3});
        for (PrId id : {1, 2, 3, 4}) p.enqueue(id, 0, out);
        p.fill_slots(fifo_selector(), prs, 0, out);
        CHECK(chain_ids(p) == std::vector<PrId>{1, 2, 3});
        CHECK(p.waiting() == std::vector<PrId>{4});
        p.fill_slots(fifo_selector(), prs, 0, out);
        CHECK(chain_ids(p) == std::vector<PrId>{1, 2, 3});
    }
    SUBCASE("under-full") {
        Pipeline p(0, {2, 2, 1, 2});
        p.enqueue(1, 0, out);
        p.fill_slots(fifo_selector(), prs, 0, out);
        CHECK(chain_ids(p) == std::vector<PrId>{1});
        CHECK(p.waiting().empty());
    }
    SUBCASE("eligibility filter") {
        Pipeline p(0, {3, 3, 1, 3});
        for (PrId id : {1, 2, 3}) p.enqueue(id, 0, out);
        p.fill_slots(fifo_selector(), prs, 0, out, [](PrId id) { return id != 2; });
        CHECK(chain_ids(p) == std::vector<PrId>{1, 3});
        CHECK(p.waiting() == std::vector<PrId>{2});
    }
}

TEST_CASE("pass at the head merges, pass behind waits for the head") {
    PrTable prs;
    prs.add(make_pr(1, Outcome::Pass, 90));
    prs.add(make_pr(2, Outcome::Pass, 60));
    Pipeline p(0, {3, 5, 1, 3});
    EventLog out;
    p.enqueue(1, 0, out);
    p.enqueue(2, 0, out);
    p.fill_slots(fifo_selector(), prs, 0, out);
    out.clear();
    p.on_build_complete(2, Outcome::Pass, 60, prs, out);
    CHECK(kinds(out) == std::vector<EventKind>{K::BuildPass});
    CHECK(chain_ids(p) == std::vector<PrId>{1, 2});
    CHECK(p.window() == 3);
    out.clear();
    p.on_build_complete(1, Outcome::Pass, 90, prs, out);
    CHECK(kinds(out) == std::vector<EventKind>{K::BuildPass, K::Merge, K::Merge});
    CHECK(out[1].pr_id == 1);
    CHECK(out[2].pr_id == 2);
    CHECK(p.chain().empty());
    CHECK(p.window() == 5);
    CHECK_THROWS_AS(p.on_build_complete(1, Outcome::Pass, 90, prs, out), EngineError);
}

TEST_CASE("failure resets successors only") {
    PrTable prs;
    prs.add(make_pr(3, Outcome::Pass, 150));
    prs.add(make_pr(4, Outcome::Fail, 60));
    prs.add(make_pr(5, Outcome::Pass, 60));
    Pipeline p(0, {3, 3, 1, 3});
    EventLog out;
    for (PrId id : {3, 4, 5}) p.enqueue(id, 0, out);
    p.fill_slots(fifo_selector(), prs, 0, out);
    const auto head = p.chain().front();
    out.clear();
    p.on_build_complete(4, Outcome::Fail, 60, prs, out);
    CHECK(kinds(out) ==
          std::vector<EventKind>{K::BuildFail, K::Dequeue, K::Reset, K::Reschedule, K::BuildStart});
    CHECK(out[2].caused_by == PrId{4});
    CHECK(chain_ids(p) == std::vector<PrId>{3, 5});
    CHECK(p.chain()[0].started_at == head.started_at);
    CHECK(p.chain()[0].finishes_at == head.finishes_at);
    CHECK(p.chain()[1].attempt == 2);
    CHECK(p.chain()[1].finishes_at == 120);
    CHECK_FALSE(p.holds(4));
}

TEST_CASE("successors beyond the halved window return to the head of the queue") {
    PrTable prs;
    for (PrId id = 1; id <= 12; ++id) prs.add(make_pr(id, id == 2 ? Outcome::Fail : Outcome::Pass, 60 + id));
    Pipeline p(0, {2, 10, 1, 10});
    EventLog out;
    for (PrId id = 1; id <= 12; ++id) p.enqueue(id, 0, out);
    p.fill_slots(fifo_selector(), prs, 0, out);
    REQUIRE(p.chain().size() == 10);
    out.clear();
    p.on_build_complete(2, Outcome::Fail, 62, prs, out);
    CHECK(p.window() == 5);
    CHECK(chain_ids(p) == std::vector<PrId>{1, 3, 4, 5, 6});
    CHECK(p.waiting() == std::vector<PrId>{7, 8, 9, 10, 11, 12});
    const auto resets = std::count_if(out.begin(), out.end(), [](auto& e) { return e.kind == K::Reset; });
    const auto restarts = std::count_if(out.begin(), out.end(), [](auto& e) { return e.kind == K::Reschedule; });
    CHECK(resets == 8);
    CHECK(restarts == 4);
}

TEST_CASE("world: empty and single PR") {
    PrTable prs;
    prs.add(make_pr(1));
    SUBCASE("empty") {
        World w(prs, {}, fifo_selector());
        CHECK(w.advance(1000).empty());
        CHECK(w.idle());
    }
    SUBCASE("single pass") {
        World w(prs, {}, fifo_selector());
        const auto arrivals = all_at(0, {1});
        w.schedule(arrivals);
        const auto log = w.advance(1000);
        REQUIRE(log.size() == 4);
        CHECK(log[0] == EventRecord{K::Enqueue, 1, 0, 0, {}});
        CHECK(log[1] == EventRecord{K::BuildStart, 1, 0, 0, {}});
        CHECK(log[2] == EventRecord{K::BuildPass, 1, 0, 60, {}});
        CHECK(log[3] == EventRecord{K::Merge, 1, 0, 60, {}});
    }
}

TEST_CASE("world: simultaneous completions in two pipelines, lower pipeline first") {
    PrTable prs;
    prs.add(make_pr(1, Outcome::Pass, 60, 1));
    prs.add(make_pr(2, Outcome::Pass, 60, 0));
    WorldConfig config;
    config.pipelines = 2;
    const auto run = [&] {
        World w(prs, config, fifo_selector());
        const auto arrivals = all_at(0, {1, 2});
        w.schedule(arrivals);
        return w.advance(500);
    };
    const auto log = run();
    std::vector<EventRecord> at60;
    for (const auto& e : log)
        if (e.time == 60) at60.push_back(e);
    REQUIRE(at60.size() == 4);
    CHECK(at60[0].pipeline == 0);
    CHECK(at60[1].pipeline == 0);
    CHECK(at60[2].pipeline == 1);
    CHECK(run() == log);
}

TEST_CASE("world: failures are processed before passes and arrivals in the same minute") {
    PrTable prs;
    prs.add(make_pr(1, Outcome::Pass, 60));
    prs.add(make_pr(2, Outcome::Fail, 60));
    prs.add(make_pr(3, Outcome::Pass, 10));
    WorldConfig config;
    config.pipelines = 1;
    World w(prs, config, fifo_selector());
    std::vector<Arrival> arrivals{{0, 1}, {0, 2}, {60, 3}};
    w.schedule(arrivals);
    const auto log = w.advance(500);
    std::vector<EventKind> at60;
    for (const auto& e : log)
        if (e.time == 60) at60.push_back(e.kind);
    // PR2 fails and PR1 passes at 60; PR3 arrives at 60 and starts after both.
    CHECK(at60 == std::vector<EventKind>{K::BuildFail, K::Dequeue, K::BuildPass, K::Merge, K::Enqueue,
                                          K::BuildStart});
}

TEST_CASE("three-slot scenario") {
    const mergeflow::testing::ThreeSlot fig;
    const auto log = fig.run();
    CHECK_NOTHROW(check_event_log(log));
    std::vector<std::pair<EventKind, PrId>> trace;
    for (const auto& e : log) trace.emplace_back(e.kind, e.pr_id);
    const std::vector<std::pair<EventKind, PrId>> expected{
        {K::Enqueue, 1},    {K::Enqueue, 2},    {K::Enqueue, 3},    {K::Enqueue, 4},     {K::Enqueue, 5},
        {K::BuildStart, 1}, {K::BuildStart, 2}, {K::BuildStart, 3}, {K::BuildPass, 1},   {K::Merge, 1},
        {K::BuildPass, 2},  {K::Merge, 2},      {K::BuildStart, 4}, {K::BuildStart, 5},  {K::BuildFail, 4},
        {K::Dequeue, 4},    {K::Reset, 5},      {K::Reschedule, 5}, {K::BuildStart, 5},  {K::BuildPass, 3},
        {K::Merge, 3},      {K::BuildPass, 5},  {K::Merge, 5}};
    CHECK(trace == expected);
}

TEST_CASE("FIFO equivalence: window 1 is a sequential pipeline") {
    for (const Minutes d : {1, 7, 60, 45}) {
        PrTable prs;
        std::vector<Arrival> arrivals;
        for (PrId id = 1; id <= 200; ++id) {
            prs.add(make_pr(id, Outcome::Pass, static_cast<double>(d)));
            arrivals.push_back({0, id});
        }
        WorldConfig config;
        config.pipelines = 1;
        config.window = {1, 1, 1, 1};
        World w(prs, config, fifo_selector());
        w.schedule(arrivals);
        for (const Minutes horizon : {Minutes{0}, Minutes{59}, Minutes{600}, Minutes{1439}}) {
            World fresh(prs, config, fifo_selector());
            fresh.schedule(arrivals);
            const auto log = fresh.advance(horizon);
            const auto merged = std::count_if(log.begin(), log.end(), [](auto& e) { return e.kind == K::Merge; });
            CHECK(merged == std::min<Minutes>(200, horizon / d));
        }
    }
}

TEST_CASE("dependencies gate eligibility and propagate failures") {
    PrTable prs;
    prs.add(make_pr(1, Outcome::Pass, 60));
    auto dependent = make_pr(2, Outcome::Pass, 30);
    dependent.depends_on = {1};
    prs.add(dependent);
    prs.add(make_pr(3, Outcome::Fail, 20));
    auto casualty = make_pr(4);
    casualty.depends_on = {3};
    prs.add(casualty);
    auto second = make_pr(5);
    second.depends_on = {4};
    prs.add(second);
    auto unknown = make_pr(6);
    unknown.depends_on = {99};
    prs.add(unknown);

    WorldConfig config;
    config.pipelines = 1;
    World w(prs, config, fifo_selector());
    const auto arrivals = all_at(0, {1, 2, 3, 4, 5, 6});
    w.schedule(arrivals);
    const auto log = w.advance(1000);
    const auto first = [&](EventKind k, PrId id) {
        return std::find_if(log.begin(), log.end(), [&](auto& e) { return e.kind == k && e.pr_id == id; });
    };
    // PR2 starts only once PR1 has merged
    CHECK(first(K::BuildStart, 2)->time == first(K::Merge, 1)->time);
    // PR3 fails, PR4 and transitively PR5 are dropped
    const auto drop4 = first(K::Dequeue, 4);
    REQUIRE(drop4 != log.end());
    CHECK(drop4->caused_by == PrId{3});
    const auto drop5 = first(K::Dequeue, 5);
    REQUIRE(drop5 != log.end());
    CHECK(drop5->caused_by == PrId{4});
    CHECK(first(K::BuildStart, 4) == log.end());
    // dependencies outside the world never block
    CHECK(first(K::Merge, 6) != log.end());
    CHECK(mergeflow::testing::check_conservation(log).empty());
}

TEST_CASE("requeue once behind the last arrival") {
    PrTable prs;
    prs.add(make_pr(1, Outcome::Fail, 30));
    prs.add(make_pr(2, Outcome::Pass, 30));
    WorldConfig config;
    config.pipelines = 1;
    config.requeue_failed_once = true;
    World w(prs, config, fifo_selector());
    std::vector<Arrival> arrivals{{0, 1}, {500, 2}};
    w.schedule(arrivals);
    const auto log = w.advance(5000);
    std::vector<Minutes> enqueues, fails;
    for (const auto& e : log)
        if (e.pr_id == 1) {
            if (e.kind == K::Enqueue) enqueues.push_back(e.time);
            if (e.kind == K::BuildFail) fails.push_back(e.time);
        }
    CHECK(enqueues == std::vector<Minutes>{0, 500});
    CHECK(fails == std::vector<Minutes>{30, 530});
    CHECK(w.idle());
}

TEST_CASE("engine property suite (sampled)") {
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        const auto err = mergeflow::testing::random_world_case(seed);
        INFO("seed ", seed);
        CHECK(err.empty());
        if (!err.empty()) {
            MESSAGE(err);
            break;
        }
    }
    for (std::uint64_t seed = 0; seed < 5000; ++seed) {
        const auto err = mergeflow::testing::random_pipeline_case(seed);
        INFO("seed ", seed);
        CHECK(err.empty());
        if (!err.empty()) {
            MESSAGE(err);
            break;
        }
    }
}

TEST_CASE("determinism: identical inputs give identical logs") {
    rnd::Engine rng(11);
    const auto prs = mergeflow::testing::random_prs(rng, 300, 0.2, 3);
    const auto arrivals = mergeflow::testing::random_arrivals(rng, prs, 1440);
    const auto run = [&] {
        WorldConfig c;
        World w(prs, c, fifo_selector());
        w.schedule(arrivals);
        return w.advance(10 * 1440);
    };
    CHECK(run() == run());
}
