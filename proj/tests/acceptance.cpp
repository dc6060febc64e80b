// Acceptance report: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,3,...]
//
// Criteria 2, 6 and 7 share one experiment grid and always run together.
// Exit status is the number of failing criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "engine_checks.hpp"
#include "mergeflow/evaluation.hpp"
#include "mergeflow/stats.hpp"
#include "mergeflow/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace mergeflow;
using sched::StrategyKind;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// 1. Engine invariants over random sequences at the production window policy.
void engine_invariants() {
    const engine::WindowPolicy policy{7, 25, 1, 7};
    const auto start = Clock::now();
    constexpr std::uint64_t kWorlds = 50'000, kPipelines = 50'000;
    std::string first_error;
    std::uint64_t bad = 0;
    for (std::uint64_t s = 0; s < kWorlds; ++s)
        if (auto err = testing::random_world_case(s, &policy); !err.empty()) {
            if (first_error.empty()) first_error = "world " + std::to_string(s) + ": " + err;
            ++bad;
        }
    for (std::uint64_t s = 0; s < kPipelines; ++s)
        if (auto err = testing::random_pipeline_case(s, &policy); !err.empty()) {
            if (first_error.empty()) first_error = "pipeline " + std::to_string(s) + ": " + err;
            ++bad;
        }
    const double secs = seconds_since(start);
    report(1, bad == 0 && secs < 60,
           fmt("%llu sequences, %llu violations, %.1f s (limit 60 s)%s%s",
               static_cast<unsigned long long>(kWorlds + kPipelines), static_cast<unsigned long long>(bad), secs,
               first_error.empty() ? "" : "; first: ", first_error.c_str()));
}

// 3. Statistics against exhaustive enumeration.
void statistics_oracles() {
    rnd::Engine rng(2024);
    const auto draw = [&](std::size_t n, std::uint64_t levels) {
        std::vector<double> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<double>(rnd::index(rng, levels)));
        return v;
    };
    int a12_mismatch = 0, a12_self = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto levels = 1 + rnd::index(rng, 40);
        const auto xs = draw(1 + rnd::index(rng, 50), levels);
        const auto ys = draw(1 + rnd::index(rng, 50), levels);
        a12_mismatch += stats::vargha_delaney_a12(xs, ys) != testing::brute_a12(xs, ys);
        a12_self += stats::vargha_delaney_a12(xs, xs) != 0.5;
    }
    int p_mismatch = 0, p_cases = 0;
    for (std::size_t n = 1; n <= 12; ++n)
        for (int t = 0; t < 40; ++t) {
            const auto xs = draw(n, 2 + rnd::index(rng, 8)), ys = draw(n, 2 + rnd::index(rng, 8));
            if (xs == ys) continue;
            double w = 0;
            const double p = testing::enumerated_p(xs, ys, w);
            const auto r = stats::wilcoxon_signed_rank(xs, ys);
            ++p_cases;
            p_mismatch += !(r.exact && r.p == p && r.w == w);
        }
    report(3, a12_mismatch == 0 && a12_self == 0 && p_mismatch == 0,
           fmt("A12 vs enumeration: %d/1000 mismatches, A12(x,x) != 0.5: %d; exact Wilcoxon vs 2^n: %d/%d mismatches",
               a12_mismatch, a12_self, p_mismatch, p_cases));
}

// 4. Snapshot calibration on synthetic snapshots, q = 20, 10^4 shuffles.
void snapshot_calibration() {
    constexpr std::size_t q = 20, kSnapshots = 500, kShuffles = 10'000;
    double fifo_rank_sum = 0, oracle_sum = 0, fifo_delay_sum = 0;
    std::size_t rank_within = 0, oracle_within = 0;
    for (std::size_t i = 0; i < kSnapshots; ++i) {
        // failing PR at every position equally often
        const std::size_t position = i % q;
        PrTable prs;
        Snapshot s;
        for (std::size_t k = 0; k < q; ++k) {
            const auto id = static_cast<PrId>(k + 1);
            auto pr = testing::make_pr(id, k == position ? Outcome::Fail : Outcome::Pass);
            prs.add(std::move(pr));
            (k < 5 ? s.processing : s.waiting).push_back(id);
        }
        s.failing_pr = static_cast<PrId>(position + 1);
        const auto seed = rnd::derive(4, i);
        const auto fifo = eval::snapshot_delay(s, prs, sched::Strategy::fifo(), kShuffles, seed);
        const auto oracle = eval::snapshot_delay(s, prs, sched::Strategy::heuristic(StrategyKind::Oracle), kShuffles, seed);
        fifo_rank_sum += fifo.mean_rank_fifo;
        fifo_delay_sum += fifo.delay;
        oracle_sum += oracle.delay;
        rank_within += std::abs(fifo.mean_rank_fifo - 10.5) <= 0.1;
        oracle_within += std::abs(oracle.delay - 9.5) <= 0.1;
    }
    const double n = kSnapshots;
    const double mean_rank = fifo_rank_sum / n, oracle_delay = oracle_sum / n, fifo_delay = fifo_delay_sum / n;
    report(4,
           std::abs(mean_rank - 10.5) <= 0.1 && std::abs(oracle_delay - 9.5) <= 0.1 && std::abs(fifo_delay) <= 0.2,
           fmt("mean_rank_fifo %.4f (10.5 +- 0.1), oracle delay %.4f (9.5 +- 0.1), FIFO-vs-FIFO delay %.4f (0 +- 0.2) "
               "over %zu snapshots; single snapshots within 0.1: rank %zu/%zu, oracle %zu/%zu",
               mean_rank, oracle_delay, fifo_delay, kSnapshots, rank_within, kSnapshots, oracle_within, kSnapshots));
}

struct Quality {
    double pr_auc = 0, positive_rate = 0, train_seconds = 0;
    std::size_t train_rows = 0;
};

Quality held_out_quality(const workload::Coupling& coupling) {
    workload::WorkloadConfig c;
    c.days = 26;
    c.seed = 1;
    c.coupling = coupling;
    const auto w = workload::generate(c);
    engine::World world(w.prs, {}, engine::fifo_selector());
    world.schedule(w.arrivals);
    const auto log = world.advance((c.days + 2) * kMinutesPerDay);
    const Minutes split = 19 * kMinutesPerDay;
    const auto cut = std::lower_bound(log.begin(), log.end(), split,
                                      [](const EventRecord& e, Minutes t) { return e.time < t; });
    const EventLog train(log.begin(), cut);

    Quality q;
    predictor::TrainingReport report;
    const auto start = Clock::now();
    const auto model = predictor::fit_predictor(train, w.prs, {}, &report);
    q.train_seconds = seconds_since(start);
    q.train_rows = report.rows;

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& row : predictor::build_training_set(log, w.prs, {&model.clustering}))
        if (row.time >= split) {
            scores.push_back(model.predict(row.features));
            labels.push_back(row.label);
        }
    q.pr_auc = predictor::pr_auc(scores, labels);
    q.positive_rate = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(labels.size());
    return q;
}

// 5. Held-out PR-AUC with strong and with zero feature coupling.
void predictor_quality() {
    const auto strong = held_out_quality({8.0, 8.0, 8.0, 0.0, 0.0});
    const auto none = held_out_quality({0.0, 0.0, 0.0, 0.0, 0.0});
    report(5,
           strong.pr_auc >= 0.95 && std::abs(none.pr_auc - none.positive_rate) <= 0.05 && strong.train_seconds < 120 &&
               none.train_seconds < 120,
           fmt("strong coupling PR-AUC %.4f (>= 0.95); zero coupling PR-AUC %.4f vs positive rate %.4f (+- 0.05); "
               "training %zu rows in %.1f s, %zu rows in %.1f s (limit 120 s)",
               strong.pr_auc, none.pr_auc, none.positive_rate, strong.train_rows, strong.train_seconds,
               none.train_rows, none.train_seconds));
}

eval::ExperimentConfig grid_config() {
    eval::ExperimentConfig c;
    c.workload.days = 30;
    c.workload.seed = 1;
    c.workload.coupling.premerge_failures = 0.8;
    c.workload.coupling.area_risk = 1.2;
    c.workload.coupling.cyclic_dependency = 0.8;
    c.train_days = 15;
    c.strategies = {StrategyKind::Fifo,         StrategyKind::PremergeFailures, StrategyKind::ChangedLines,
                    StrategyKind::ChangedFiles, StrategyKind::LastFailureGap,   StrategyKind::Predictive};
    c.lookaheads = {5, 10, 15, 20};
    c.replications = 10;
    c.seed = 1;
    c.shuffles = 10'000;
    return c;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    return text.str();
}

const nlohmann::json* find_row(const nlohmann::json& rows, const std::string& strategy, std::size_t lookahead = 0) {
    for (const auto& r : rows)
        if (r.at("strategy") == strategy && (lookahead == 0 || r.at("lookahead") == lookahead)) return &r;
    return nullptr;
}

// 2, 6 and 7 share the grid: run it twice, compare bytes, read the summary.
void experiment_grid() {
    const auto config = grid_config();
    const auto root = fs::temp_directory_path() / "mergeflow_acceptance";
    fs::remove_all(root);

    auto start = Clock::now();
    const auto first = eval::run_experiment(config);
    const double grid_seconds = seconds_since(start);
    eval::write_results(first, root / "a");
    const auto second = eval::run_experiment(config);
    eval::write_results(second, root / "b");
    std::vector<std::string> differing;
    for (const char* name : {"throughput.csv", "delays.csv", "summary.json"})
        if (slurp(root / "a" / name) != slurp(root / "b" / name)) differing.push_back(name);
    report(2, differing.empty(),
           fmt("%zu throughput rows, %zu delay rows; %zu of 3 output files differ between two runs",
               first.throughput.size(), first.delays.size(), differing.size()));

    // snapshot delays
    const auto& delays = first.summary.at("delays");
    const auto* predictive = find_row(delays, "predictive");
    bool rq1 = predictive != nullptr;
    double mean_delay = 0, p = 1, a12 = 0;
    if (predictive) {
        mean_delay = predictive->at("delay").at("mean");
        const auto& w = predictive->at("wilcoxon");
        p = w.at("p").is_null() ? 1.0 : w.at("p").get<double>();
        a12 = predictive->at("a12");
        rq1 = mean_delay > 0 && p < 0.05 && a12 >= 0.6;
    }
    int not_significant = 0;
    std::string heuristics;
    for (const char* name : {"premerge_failures", "changed_lines", "changed_files", "last_failure_gap"}) {
        const auto* row = find_row(delays, name);
        const auto& w = row->at("wilcoxon");
        const double hp = w.at("p").is_null() ? 1.0 : w.at("p").get<double>();
        not_significant += hp >= 0.05;
        heuristics += fmt(" %s p=%.3g a12=%.3f", name, hp, row->at("a12").get<double>());
    }
    report(6, rq1 && not_significant >= 2,
           fmt("%zu snapshots; predictive mean delay %.3f, p=%.3g, A12=%.3f; heuristics not significant: %d/4;%s",
               first.snapshots.size(), mean_delay, p, a12, not_significant, heuristics.c_str()));

    // throughput
    const auto& throughput = first.summary.at("throughput");
    std::string trend;
    double previous = -1e300, delta20 = 0, a12_20 = 0;
    bool monotone = true;
    for (std::size_t lookahead : config.lookaheads) {
        const auto* row = find_row(throughput, "predictive", lookahead);
        const double delta = row->at("delta_vs_fifo");
        const double a = row->at("a12");
        monotone = monotone && delta >= previous;
        previous = delta;
        trend += fmt(" L%zu %+.2f (A12 %.3f)", lookahead, delta, a);
        if (lookahead == 20) {
            delta20 = delta;
            a12_20 = a;
        }
    }
    report(7, delta20 > 0 && a12_20 >= 0.6 && monotone && grid_seconds < 600,
           fmt("merged/day vs FIFO:%s; monotone %s; grid %.1f s (limit 600 s)", trend.c_str(),
               monotone ? "yes" : "no", grid_seconds));
    fs::remove_all(root);
}

// 8. Without failures, the queue order must not change daily merged counts.
void all_pass_neutrality() {
    auto config = grid_config();
    config.workload.failure_rate = 1e-9;
    config.strategies = {StrategyKind::Fifo,         StrategyKind::PremergeFailures, StrategyKind::ChangedLines,
                         StrategyKind::ChangedFiles, StrategyKind::LastFailureGap,   StrategyKind::Oracle};
    config.replications = 1;
    config.shuffles = 1;
    const auto count_mismatches = [](const eval::ExperimentResult& r, std::size_t& cells) {
        std::map<std::pair<std::size_t, int>, std::set<std::int64_t>> counts;
        for (const auto& row : r.throughput) counts[{row.lookahead, row.day}].insert(row.merged_count);
        cells = counts.size();
        std::size_t mismatched = 0;
        for (const auto& [key, values] : counts) mismatched += values.size() > 1;
        return mismatched;
    };
    std::size_t cells = 0, cells_equal = 0;
    const auto mismatched = count_mismatches(eval::run_experiment(config), cells);
    config.workload.build_duration_sigma = 0;
    const auto mismatched_equal = count_mismatches(eval::run_experiment(config), cells_equal);
    report(8, mismatched == 0,
           fmt("(lookahead, day) cells where strategies disagree: %zu/%zu with lognormal durations, "
               "%zu/%zu with equal durations",
               mismatched, cells, mismatched_equal, cells_equal));
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            std::stringstream list(argv[++i]);
            for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
        } else {
            std::cerr << "usage: acceptance [--only 1,3,...]\n";
            return 64;
        }
    }
    const auto wanted = [&](std::initializer_list<int> ids) {
        if (only.empty()) return true;
        for (int id : ids)
            if (only.contains(id)) return true;
        return false;
    };
    const auto start = Clock::now();
    if (wanted({1})) engine_invariants();
    if (wanted({3})) statistics_oracles();
    if (wanted({4})) snapshot_calibration();
    if (wanted({5})) predictor_quality();
    if (wanted({2, 6, 7})) experiment_grid();
    if (wanted({8})) all_pass_neutrality();
    std::printf("acceptance: %d failing, %.1f s\n", failures, seconds_since(start));
    return failures;
}
