#pragma once

#include <algorithm>
#include <vector>

#include "mergeflow/core.hpp"
#include "mergeflow/engine.hpp"
#include "mergeflow/random.hpp"

namespace mergeflow::testing {

inline PullRequest make_pr(PrId id, Outcome outcome = Outcome::Pass, double duration = 60.0, PipelineId queue = 0) {
    PullRequest pr;
    pr.id = id;
    pr.true_outcome = outcome;
    pr.build_duration = duration;
    pr.change_queue = queue;
    pr.changed_files = {"src/file" + std::to_string(id) + ".cpp"};
    return pr;
}

inline std::vector<Arrival> all_at(Minutes t, std::initializer_list<PrId> ids) {
    std::vector<Arrival> out;
    for (PrId id : ids) out.push_back({t, id});
    return out;
}

// Window 3: PR4 fails while PR3 is still running and PR5 speculates on it.
struct ThreeSlot {
    PrTable prs;
    engine::WorldConfig config;
    ThreeSlot() {
        prs.add(make_pr(1));
        prs.add(make_pr(2));
        prs.add(make_pr(3, Outcome::Pass, 150));
        prs.add(make_pr(4, Outcome::Fail));
        prs.add(make_pr(5));
        config.pipelines = 1;
        config.window = {3, 3, 1, 3};
    }
    EventLog run() const {
        engine::World world(prs, config, engine::fifo_selector());
        const auto arrivals = all_at(0, {1, 2, 3, 4, 5});
        world.schedule(arrivals);
        return world.advance(10'000);
    }
};

// Random PR table for property tests.
inline PrTable random_prs(rnd::Engine& rng, std::size_t n, double fail_rate, int queues, int max_duration = 90) {
    PrTable prs;
    for (std::size_t i = 0; i < n; ++i) {
        auto pr = make_pr(static_cast<PrId>(i + 1),
                          rnd::bernoulli(rng, fail_rate) ? Outcome::Fail : Outcome::Pass,
                          static_cast<double>(1 + rnd::index(rng, static_cast<std::uint64_t>(max_duration))),
                          static_cast<PipelineId>(rnd::index(rng, static_cast<std::uint64_t>(queues))));
        pr.additions = static_cast<std::int64_t>(rnd::index(rng, 500));
        pr.deletions = static_cast<std::int64_t>(rnd::index(rng, 200));
        prs.add(std::move(pr));
    }
    return prs;
}

inline std::vector<Arrival> random_arrivals(rnd::Engine& rng, const PrTable& prs, Minutes horizon) {
    std::vector<Arrival> out;
    for (const auto& pr : prs)
        out.push_back({static_cast<Minutes>(rnd::index(rng, static_cast<std::uint64_t>(horizon))), pr.id});
    std::stable_sort(out.begin(), out.end(), [](const Arrival& a, const Arrival& b) { return a.time < b.time; });
    return out;
}

}  // namespace mergeflow::testing
