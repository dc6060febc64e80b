#include "mergeflow/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mergeflow/io.hpp"
#include "mergeflow/kernels.hpp"
#include "mergeflow/random.hpp"
#include "mergeflow/stats.hpp"

namespace mergeflow::eval {

using sched::StrategyKind;

namespace {

void erase_value(std::vector<PrId>& v, PrId id) {
    if (auto it = std::find(v.begin(), v.end(), id); it != v.end()) v.erase(it);
}

struct QueueView {
    std::vector<PrId> chain;
    std::vector<PrId> waiting;
    std::size_t cascade = 0;  // insertion point for successors returned by the current failure
};

}  // namespace

std::vector<Snapshot> extract_snapshots(const EventLog& log, const PrTable& prs) {
    check_event_log(log);
    predictor::AttributionTracker attribution(prs);
    std::map<PipelineId, QueueView> queues;
    std::vector<Snapshot> out;
    for (const auto& ev : log) {
        auto& q = queues[ev.pipeline];
        switch (ev.kind) {
            case EventKind::Enqueue:
                q.waiting.push_back(ev.pr_id);
                break;
            case EventKind::BuildStart:
                if (std::find(q.chain.begin(), q.chain.end(), ev.pr_id) == q.chain.end()) {
                    erase_value(q.waiting, ev.pr_id);
                    q.chain.push_back(ev.pr_id);
                }
                break;
            case EventKind::BuildPass:
                break;
            case EventKind::BuildFail:
                if (attribution.attributable(ev)) out.push_back({ev.pr_id, q.chain, q.waiting, ev.time, ev.pipeline});
                q.cascade = 0;
                break;
            case EventKind::Merge:
            case EventKind::Dequeue:
                erase_value(q.chain, ev.pr_id);
                erase_value(q.waiting, ev.pr_id);
                break;
            case EventKind::Reset: {
                erase_value(q.chain, ev.pr_id);
                const auto at = std::min(q.cascade, q.waiting.size());
                q.waiting.insert(q.waiting.begin() + static_cast<std::ptrdiff_t>(at), ev.pr_id);
                ++q.cascade;
                break;
            }
            case EventKind::Reschedule:
                erase_value(q.waiting, ev.pr_id);
                q.chain.push_back(ev.pr_id);
                if (q.cascade > 0) --q.cascade;
                break;
        }
        attribution.observe(ev);
    }
    return out;
}

namespace {

std::size_t position_of(std::span<const PrId> ids, PrId target) {
    const auto it = std::find(ids.begin(), ids.end(), target);
    if (it == ids.end()) throw std::invalid_argument("failing pr " + std::to_string(target) + " is not in the snapshot");
    return static_cast<std::size_t>(it - ids.begin());
}

double strategy_rank(const Snapshot& s, std::span<const PrId> universe, const PrTable& prs,
                     const sched::Strategy& strategy) {
    const auto ranked = sched::rank(universe, prs, strategy, s.time);
    return static_cast<double>(position_of(ranked, s.failing_pr) + 1);
}

}  // namespace

DelayResult snapshot_delay(const Snapshot& snapshot, const PrTable& prs, const sched::Strategy& strategy,
                           std::size_t n_shuffles, std::uint64_t seed) {
    const auto universe = snapshot.universe();
    const auto target = position_of(universe, snapshot.failing_pr);
    DelayResult r;
    r.strategy = strategy.name();
    r.mean_rank_fifo = kernels::mean_shuffled_rank_parallel(universe.size(), target, n_shuffles, seed);
    r.rank_strategy = strategy_rank(snapshot, universe, prs, strategy);
    r.delay = r.rank_strategy - r.mean_rank_fifo;
    return r;
}

PredictiveScorer::PredictiveScorer(const predictor::FailurePredictor& model, const PrTable& prs)
    : model_(&model), history_(prs) {}

double PredictiveScorer::score(const PullRequest& pr, PipelineId pipeline, Minutes now) const {
    auto fv = history_.features(pr, pipeline, now, nullptr);
    auto [it, fresh] = clusters_.try_emplace(pr.id, 0);
    if (fresh) it->second = model_->clustering.empty() ? 0 : model_->clustering.assign(pr.changed_files);
    fv[predictor::kChangedFilesCluster] = static_cast<double>(it->second);
    return model_->predict(fv);
}

std::vector<DelayResult> evaluate_snapshots(const EventLog& log, const PrTable& prs,
                                            std::span<const Snapshot> snapshots,
                                            std::span<const StrategyKind> strategies,
                                            const PredictiveScorer* primed, std::size_t n_shuffles,
                                            std::uint64_t seed) {
    const bool wants_model = std::find(strategies.begin(), strategies.end(), StrategyKind::Predictive) !=
                             strategies.end();
    if (wants_model && !primed) throw std::invalid_argument("predictive strategy needs a trained model");

    std::vector<double> fifo(snapshots.size());
    std::vector<std::vector<PrId>> universes(snapshots.size());
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        universes[i] = snapshots[i].universe();
        const auto target = position_of(universes[i], snapshots[i].failing_pr);
        fifo[i] = kernels::mean_shuffled_rank_parallel(universes[i].size(), target, n_shuffles, rnd::derive(seed, i));
    }

    std::optional<PredictiveScorer> scorer;
    if (primed) scorer = *primed;
    std::size_t cursor = 0;
    Minutes last = std::numeric_limits<Minutes>::min();

    std::vector<DelayResult> out;
    out.reserve(snapshots.size() * strategies.size());
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        const auto& s = snapshots[i];
        if (s.time < last) throw std::invalid_argument("snapshots must be in time order");
        last = s.time;
        if (scorer)
            for (; cursor < log.size() && log[cursor].time < s.time; ++cursor) scorer->observe(log[cursor]);
        for (const auto kind : strategies) {
            sched::Strategy strategy;
            if (kind == StrategyKind::Predictive) {
                const auto* sc = &*scorer;
                const auto pipeline = s.pipeline;
                strategy = sched::Strategy::predictive(
                    [sc, pipeline](const PullRequest& pr, Minutes now) { return sc->score(pr, pipeline, now); });
            } else {
                strategy = sched::Strategy::heuristic(kind);
            }
            DelayResult r;
            r.snapshot = i;
            r.strategy = strategy.name();
            r.mean_rank_fifo = fifo[i];
            r.rank_strategy = strategy_rank(s, universes[i], prs, strategy);
            r.delay = r.rank_strategy - r.mean_rank_fifo;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::int64_t count_business_merges(const EventLog& log, int day, BusinessHours hours) {
    const Minutes lo = day * kMinutesPerDay + hours.start_hour * kMinutesPerHour;
    const Minutes hi = day * kMinutesPerDay + hours.end_hour * kMinutesPerHour;
    return std::count_if(log.begin(), log.end(), [&](const EventRecord& ev) {
        return ev.kind == EventKind::Merge && ev.time >= lo && ev.time < hi;
    });
}

EventLog run_world(const PrTable& prs, std::span<const Arrival> arrivals, const StrategySpec& spec,
                   std::size_t lookahead, engine::WorldConfig world, Minutes until) {
    std::optional<PredictiveScorer> scorer;
    sched::Strategy strategy;
    if (spec.kind == StrategyKind::Predictive) {
        if (!spec.scorer) throw std::invalid_argument("predictive strategy needs a trained model");
        scorer = *spec.scorer;
        const auto* sc = &*scorer;
        const int pipelines = world.pipelines;
        strategy = sched::Strategy::predictive([sc, pipelines](const PullRequest& pr, Minutes now) {
            return sc->score(pr, pr.change_queue % pipelines, now);
        });
    } else {
        strategy = sched::Strategy::heuristic(spec.kind);
    }
    engine::World w(prs, world, sched::make_selector(prs, strategy, {lookahead}));
    if (scorer) w.set_observer([&](const EventRecord& ev) { scorer->observe(ev); });
    w.schedule(arrivals);
    return w.advance(until);
}

std::vector<ThroughputResult> simulate_business_day(const PrTable& prs, std::span<const Arrival> arrivals, int day,
                                                    std::span<const StrategySpec> strategies,
                                                    std::size_t lookahead, engine::WorldConfig world,
                                                    BusinessHours hours) {
    world.requeue_failed_once = true;
    const Minutes until = day * kMinutesPerDay + hours.end_hour * kMinutesPerHour - 1;
    std::vector<ThroughputResult> out;
    for (const auto& spec : strategies) {
        const auto log = run_world(prs, arrivals, spec, lookahead, world, until);
        out.push_back({day, spec.name(), lookahead, 0, count_business_merges(log, day, hours)});
    }
    return out;
}

ExperimentConfig::ExperimentConfig() {
    workload.days = 30;
    strategies = {StrategyKind::Fifo,         StrategyKind::PremergeFailures, StrategyKind::ChangedLines,
                  StrategyKind::ChangedFiles, StrategyKind::LastFailureGap,   StrategyKind::Predictive};
}

void ExperimentConfig::validate() const {
    if (!replay) workload.validate();
    engine.window.validate();
    if (engine.pipelines < 1) throw std::invalid_argument("engine.pipelines must be >= 1");
    if (strategies.empty()) throw std::invalid_argument("strategies must not be empty");
    if (lookaheads.empty()) throw std::invalid_argument("lookaheads must not be empty");
    for (auto l : lookaheads)
        if (l == 0) throw std::invalid_argument("lookaheads must be >= 1");
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (train_days < 0) throw std::invalid_argument("train_days must be >= 0");
    if (shuffles == 0) throw std::invalid_argument("shuffles must be >= 1");
    if (!replay && train_days >= workload.days) throw std::invalid_argument("train_days must be < workload.days");
    if (fit.clusters < 1) throw std::invalid_argument("predictor.clusters must be >= 1");
    if (fit.tuning.budget < 1) throw std::invalid_argument("predictor.budget must be >= 1");
    if (fit.tuning.folds < 2) throw std::invalid_argument("predictor.folds must be >= 2");
    if (fit.tuning.n_rounds < 1) throw std::invalid_argument("predictor.n_rounds must be >= 1");
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json strategies = nlohmann::json::array();
    for (auto k : c.strategies) strategies.push_back(std::string(sched::to_string(k)));
    nlohmann::json doc{
        {"workload", workload::to_json(c.workload)},
        {"train_days", c.train_days},
        {"engine",
         {{"pipelines", c.engine.pipelines},
          {"window",
           {{"floor", c.engine.window.floor},
            {"ceiling", c.engine.window.ceiling},
            {"increase_step", c.engine.window.increase_step},
            {"initial", c.engine.window.initial}}}}},
        {"strategies", strategies},
        {"lookaheads", c.lookaheads},
        {"replications", c.replications},
        {"seed", c.seed},
        {"shuffles", c.shuffles},
        {"predictor",
         {{"clusters", c.fit.clusters},
          {"budget", c.fit.tuning.budget},
          {"folds", c.fit.tuning.folds},
          {"n_rounds", c.fit.tuning.n_rounds}}},
        {"output_dir", c.output_dir.string()},
    };
    if (c.replay) doc["replay"] = c.replay->string();
    return doc;
}

ExperimentConfig experiment_from_json(const nlohmann::json& doc, const std::filesystem::path& base) {
    if (!doc.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
    ExperimentConfig c;
    try {
        if (doc.contains("workload")) c.workload = workload::workload_from_json(doc.at("workload"));
        if (doc.contains("replay")) {
            std::filesystem::path p = doc.at("replay").get<std::string>();
            c.replay = p.is_relative() && !base.empty() ? base / p : p;
        }
        c.train_days = doc.value("train_days", c.train_days);
        if (doc.contains("engine")) {
            const auto& e = doc.at("engine");
            c.engine.pipelines = e.value("pipelines", c.engine.pipelines);
            if (e.contains("window")) {
                const auto& w = e.at("window");
                c.engine.window.floor = w.value("floor", c.engine.window.floor);
                c.engine.window.ceiling = w.value("ceiling", c.engine.window.ceiling);
                c.engine.window.increase_step = w.value("increase_step", c.engine.window.increase_step);
                c.engine.window.initial = w.value("initial", c.engine.window.initial);
            }
        }
        if (doc.contains("strategies")) {
            c.strategies.clear();
            for (const auto& s : doc.at("strategies")) {
                const auto name = s.get<std::string>();
                const auto kind = sched::strategy_from_string(name);
                if (!kind) throw std::invalid_argument("unknown strategy '" + name + "'");
                c.strategies.push_back(*kind);
            }
        }
        if (doc.contains("lookaheads")) c.lookaheads = doc.at("lookaheads").get<std::vector<std::size_t>>();
        c.replications = doc.value("replications", c.replications);
        c.seed = doc.value("seed", c.seed);
        c.shuffles = doc.value("shuffles", c.shuffles);
        if (doc.contains("predictor")) {
            const auto& p = doc.at("predictor");
            c.fit.clusters = p.value("clusters", c.fit.clusters);
            c.fit.tuning.budget = p.value("budget", c.fit.tuning.budget);
            c.fit.tuning.folds = p.value("folds", c.fit.tuning.folds);
            c.fit.tuning.n_rounds = p.value("n_rounds", c.fit.tuning.n_rounds);
        }
        if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return experiment_from_json(doc, path.parent_path());
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

nlohmann::json summary_json(const stats::Summary& s) {
    return {{"n", s.n}, {"mean", s.mean}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"iqr", s.iqr()}};
}

nlohmann::json compare(std::span<const double> xs, std::span<const double> ys) {
    nlohmann::json out;
    out["a12"] = xs.empty() ? nlohmann::json(nullptr) : nlohmann::json(stats::vargha_delaney_a12(xs, ys));
    try {
        const auto w = stats::wilcoxon_signed_rank(xs, ys);
        out["wilcoxon"] = {{"w", w.w}, {"p", w.p}, {"n", w.n}, {"exact", w.exact}};
    } catch (const stats::NoDifferences&) {
        out["wilcoxon"] = {{"w", nullptr}, {"p", nullptr}, {"n", 0}, {"note", "all paired differences are zero"}};
    } catch (const std::invalid_argument&) {
        out["wilcoxon"] = {{"w", nullptr}, {"p", nullptr}, {"n", 0}, {"note", "no samples"}};
    }
    return out;
}

struct Sources {
    PrTable prs;
    std::vector<Arrival> arrivals;
};

Sources load_sources(const ExperimentConfig& c) {
    if (c.replay) {
        auto bundle = io::ingest(*c.replay);
        return {std::move(bundle.prs), std::move(bundle.arrivals)};
    }
    auto w = workload::generate(c.workload);
    return {std::move(w.prs), std::move(w.arrivals)};
}

}  // namespace

nlohmann::json summarize_delays(std::span<const DelayResult> rows) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const DelayResult*>> by;
    for (const auto& r : rows) {
        if (!by.contains(r.strategy)) order.push_back(r.strategy);
        by[r.strategy].push_back(&r);
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& name : order) {
        std::vector<double> delay, rank, fifo;
        for (const auto* r : by[name]) {
            delay.push_back(r->delay);
            rank.push_back(r->rank_strategy);
            fifo.push_back(r->mean_rank_fifo);
        }
        auto entry = compare(rank, fifo);
        entry["strategy"] = name;
        entry["delay"] = summary_json(stats::summarize(delay));
        out.push_back(std::move(entry));
    }
    return out;
}

nlohmann::json summarize_throughput(std::span<const ThroughputResult> rows) {
    // FIFO reference per (lookahead, day); deterministic strategies run once.
    std::map<std::pair<std::size_t, int>, double> fifo;
    for (const auto& r : rows)
        if (r.strategy == sched::to_string(StrategyKind::Fifo)) fifo[{r.lookahead, r.day}] = r.merged_count;

    std::vector<std::pair<std::string, std::size_t>> order;
    std::map<std::pair<std::string, std::size_t>, std::vector<const ThroughputResult*>> by;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.strategy, r.lookahead);
        if (!by.contains(key)) order.push_back(key);
        by[key].push_back(&r);
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& key : order) {
        std::vector<double> xs, ys;
        for (const auto* r : by[key]) {
            const auto ref = fifo.find({r->lookahead, r->day});
            if (ref == fifo.end()) continue;
            xs.push_back(static_cast<double>(r->merged_count));
            ys.push_back(ref->second);
        }
        std::vector<double> all;
        for (const auto* r : by[key]) all.push_back(static_cast<double>(r->merged_count));
        nlohmann::json entry = xs.empty() ? nlohmann::json::object() : compare(xs, ys);
        entry["strategy"] = key.first;
        entry["lookahead"] = key.second;
        entry["merged"] = summary_json(stats::summarize(all));
        if (!xs.empty()) entry["delta_vs_fifo"] = stats::summarize(xs).mean - stats::summarize(ys).mean;
        out.push_back(std::move(entry));
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const predictor::FailurePredictor* model) {
    config.validate();
    const auto sources = load_sources(config);
    const auto& prs = sources.prs;
    const BusinessHours hours{config.workload.business_start_hour, config.workload.business_end_hour};

    int days = 0;
    for (const auto& a : sources.arrivals) days = std::max(days, static_cast<int>(a.time / kMinutesPerDay) + 1);
    const Minutes test_start = config.train_days * kMinutesPerDay;

    std::vector<StrategyKind> kinds = config.strategies;
    if (std::find(kinds.begin(), kinds.end(), StrategyKind::Fifo) == kinds.end())
        kinds.insert(kinds.begin(), StrategyKind::Fifo);
    const bool predictive = std::find(kinds.begin(), kinds.end(), StrategyKind::Predictive) != kinds.end();

    // Historical replay under FIFO: training data and delay snapshots.
    engine::WorldConfig replay_world = config.engine;
    replay_world.requeue_failed_once = false;
    const auto history = run_world(prs, sources.arrivals, {StrategyKind::Fifo, nullptr}, 1, replay_world,
                                   static_cast<Minutes>(days + 1) * kMinutesPerDay);
    const auto split = std::lower_bound(history.begin(), history.end(), test_start,
                                        [](const EventRecord& ev, Minutes t) { return ev.time < t; });
    const EventLog train_log(history.begin(), split);

    ExperimentResult result;
    std::vector<predictor::FailurePredictor> models;
    if (predictive && !model) {
        for (int r = 0; r < config.replications; ++r) {
            auto fit = config.fit;
            fit.tuning.seed = rnd::derive(config.seed, 100 + static_cast<std::uint64_t>(r));
            predictor::TrainingReport report;
            models.push_back(predictor::fit_predictor(train_log, prs, fit, &report));
            result.training.push_back(report);
        }
    }
    const int model_count = predictive ? (model ? 1 : config.replications) : 0;
    const auto model_at = [&](int r) -> const predictor::FailurePredictor& {
        return model ? *model : models.at(static_cast<std::size_t>(r));
    };
    std::vector<PredictiveScorer> primed;
    for (int r = 0; r < model_count; ++r) {
        primed.emplace_back(model_at(r), prs);
        for (const auto& ev : train_log) primed.back().observe(ev);
    }

    // Snapshot delays from the evaluated part of the replay.
    for (auto& s : extract_snapshots(history, prs))
        if (s.time >= test_start) result.snapshots.push_back(std::move(s));
    result.delays = evaluate_snapshots(history, prs, result.snapshots, kinds,
                                       primed.empty() ? nullptr : &primed.front(), config.shuffles,
                                       rnd::derive(config.seed, 1));

    // Throughput: independent business days. Only model-backed runs vary by replication.
    struct Job {
        StrategyKind kind;
        std::size_t lookahead;
        int day;
        int replication;
    };
    std::vector<Job> jobs;
    for (const auto kind : kinds)
        for (const auto lookahead : config.lookaheads)
            for (int day = config.train_days; day < days; ++day) {
                const int reps = kind == StrategyKind::Predictive && !model ? config.replications : 1;
                for (int r = 0; r < reps; ++r) jobs.push_back({kind, lookahead, day, r});
            }
    std::vector<std::vector<Arrival>> day_arrivals(static_cast<std::size_t>(std::max(days, 0)));
    for (const auto& a : sources.arrivals) day_arrivals[static_cast<std::size_t>(a.time / kMinutesPerDay)].push_back(a);

    result.throughput.resize(jobs.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        try {
            const auto& job = jobs[i];
            StrategySpec spec{job.kind, nullptr};
            if (job.kind == StrategyKind::Predictive)
                spec.scorer = &primed.at(static_cast<std::size_t>(model ? 0 : job.replication));
            auto r = simulate_business_day(prs, day_arrivals[static_cast<std::size_t>(job.day)], job.day,
                                           std::span(&spec, 1), job.lookahead, config.engine, hours);
            r.front().replication = job.replication;
            result.throughput[i] = r.front();
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    nlohmann::json training = nlohmann::json::array();
    for (const auto& t : result.training)
        training.push_back({{"rows", t.rows},
                            {"positives", t.positives},
                            {"negatives", t.negatives},
                            {"cv_pr_auc", t.cv_pr_auc},
                            {"params", predictor::to_json(t.params)}});
    auto echoed = to_json(config);
    echoed.erase("output_dir");  // results must not depend on where they are written
    result.summary = {
        {"config", echoed},
        {"snapshots", result.snapshots.size()},
        {"delays", summarize_delays(result.delays)},
        {"throughput", summarize_throughput(result.throughput)},
        {"training", training},
    };
    return result;
}

std::string throughput_csv(std::span<const ThroughputResult> rows) {
    std::ostringstream out;
    out << "strategy,lookahead,replication,day,merged_count\n";
    for (const auto& r : rows)
        out << r.strategy << ',' << r.lookahead << ',' << r.replication << ',' << r.day << ',' << r.merged_count
            << '\n';
    return out.str();
}

std::string delays_csv(std::span<const DelayResult> rows, std::span<const Snapshot> snapshots) {
    std::ostringstream out;
    out << "snapshot,strategy,time,pipeline,failing_pr,queue_length,rank_strategy,mean_rank_fifo,delay\n";
    for (const auto& r : rows) {
        const auto& s = snapshots[r.snapshot];
        out << r.snapshot << ',' << r.strategy << ',' << s.time << ',' << s.pipeline << ',' << s.failing_pr << ','
            << s.processing.size() + s.waiting.size() << ',' << fmt(r.rank_strategy) << ',' << fmt(r.mean_rank_fifo)
            << ',' << fmt(r.delay) << '\n';
    }
    return out.str();
}

void write_results(const ExperimentResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto write = [&](const char* name, const std::string& text) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << text;
    };
    write("throughput.csv", throughput_csv(result.throughput));
    write("delays.csv", delays_csv(result.delays, result.snapshots));
    write("summary.json", result.summary.dump(2) + "\n");
}

}  // namespace mergeflow::eval
