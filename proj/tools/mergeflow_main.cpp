#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mergeflow/evaluation.hpp"
#include "mergeflow/io.hpp"
#include "mergeflow/training.hpp"
#include "mergeflow/workload.hpp"

namespace fs = std::filesystem;
using namespace mergeflow;

namespace {

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// Accepts an experiment config (uses its "workload" section) or a bare
// workload config.
workload::WorkloadConfig workload_config(const fs::path& path) {
    const auto doc = read_json(path);
    auto config = workload::workload_from_json(doc.contains("workload") ? doc.at("workload") : doc);
    config.validate();
    return config;
}

int cmd_generate(const fs::path& config_path, const fs::path& out) {
    const auto w = workload::generate(workload_config(config_path));
    fs::create_directories(out);
    io::Bundle prs, arrivals;
    prs.prs = w.prs;
    arrivals.arrivals = w.arrivals;
    io::write_jsonl(out / "prs.jsonl", "prs", prs);
    io::write_jsonl(out / "arrivals.jsonl", "arrivals", arrivals);
    std::cout << w.prs.size() << " pull requests, " << w.arrivals.size() << " arrivals -> " << out.string() << "\n";
    return 0;
}

int cmd_replay(const fs::path& config_path, const std::string& strategy_name, std::size_t lookahead,
               const fs::path& out) {
    const auto config = eval::load_experiment(config_path);
    io::Bundle bundle;
    if (config.replay) {
        bundle = io::ingest(*config.replay);
    } else {
        auto w = workload::generate(config.workload);
        bundle.prs = std::move(w.prs);
        bundle.arrivals = std::move(w.arrivals);
    }
    const auto kind = sched::strategy_from_string(strategy_name);
    if (!kind || *kind == sched::StrategyKind::Predictive)
        throw std::invalid_argument("replay needs a model-free strategy, got '" + strategy_name + "'");
    Minutes end = 0;
    for (const auto& a : bundle.arrivals) end = std::max(end, a.time);
    auto world = config.engine;
    world.requeue_failed_once = false;
    bundle.events = eval::run_world(bundle.prs, bundle.arrivals, {*kind, nullptr}, lookahead, world,
                                    (end / kMinutesPerDay + 2) * kMinutesPerDay);
    bundle.arrivals.clear();
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_jsonl(out, "log", bundle);
    std::cout << bundle.events.size() << " events -> " << out.string() << "\n";
    return 0;
}

int cmd_train(const fs::path& log_path, const fs::path& out, std::size_t budget, std::uint64_t seed,
              std::size_t clusters, int rounds) {
    const auto bundle = io::ingest(log_path);
    predictor::FitOptions options;
    options.clusters = clusters;
    options.tuning.budget = budget;
    options.tuning.seed = seed;
    options.tuning.n_rounds = rounds;
    predictor::TrainingReport report;
    const auto model = predictor::fit_predictor(bundle.events, bundle.prs, options, &report);
    write_text(out, model.to_json().dump() + "\n");
    const nlohmann::json summary{{"rows", report.rows},
                                 {"positives", report.positives},
                                 {"negatives", report.negatives},
                                 {"cv_pr_auc", report.cv_pr_auc},
                                 {"params", predictor::to_json(report.params)}};
    auto report_path = out;
    report_path += ".report.json";
    write_text(report_path, summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

predictor::FailurePredictor load_model(const fs::path& path) {
    return predictor::FailurePredictor::from_json(read_json(path));
}

int cmd_snapshot_eval(const fs::path& log_path, const std::string& model_path, const std::vector<std::string>& names,
                      std::size_t shuffles, std::uint64_t seed, const fs::path& out) {
    const auto bundle = io::ingest(log_path);
    std::vector<sched::StrategyKind> kinds;
    for (const auto& n : names) {
        const auto kind = sched::strategy_from_string(n);
        if (!kind) throw std::invalid_argument("unknown strategy '" + n + "'");
        kinds.push_back(*kind);
    }
    std::optional<predictor::FailurePredictor> model;
    std::optional<eval::PredictiveScorer> scorer;
    if (!model_path.empty()) {
        model = load_model(model_path);
        scorer.emplace(*model, bundle.prs);
    }
    const auto snapshots = eval::extract_snapshots(bundle.events, bundle.prs);
    const auto delays = eval::evaluate_snapshots(bundle.events, bundle.prs, snapshots, kinds,
                                                 scorer ? &*scorer : nullptr, shuffles, seed);
    fs::create_directories(out);
    write_text(out / "delays.csv", eval::delays_csv(delays, snapshots));
    const nlohmann::json summary{{"snapshots", snapshots.size()}, {"delays", eval::summarize_delays(delays)}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    std::cout << snapshots.size() << " snapshots -> " << out.string() << "\n";
    return 0;
}

int cmd_simulate(const fs::path& config_path, const std::string& model_path, const std::string& out) {
    auto config = eval::load_experiment(config_path);
    if (!out.empty()) config.output_dir = out;
    std::optional<predictor::FailurePredictor> model;
    if (!model_path.empty()) model = load_model(model_path);
    const auto result = eval::run_experiment(config, model ? &*model : nullptr);
    eval::write_results(result, config.output_dir);
    for (const auto& row : result.summary.at("throughput")) {
        std::cout << row.at("strategy").get<std::string>() << " lookahead=" << row.at("lookahead")
                  << " merged/day=" << row.at("merged").at("mean");
        if (row.contains("delta_vs_fifo")) std::cout << " delta=" << row.at("delta_vs_fifo");
        if (row.contains("a12")) std::cout << " a12=" << row.at("a12");
        std::cout << "\n";
    }
    std::cout << "results -> " << config.output_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Merge-queue scheduling simulator and failure-aware prioritizer"};
    app.require_subcommand(1);

    std::string config, out, log, model, strategy = "fifo";
    std::vector<std::string> strategies{"fifo", "premerge_failures", "changed_lines", "changed_files",
                                        "last_failure_gap"};
    std::size_t budget = 16, shuffles = 10000, clusters = 16, lookahead = 1;
    std::uint64_t seed = 0;
    int rounds = 200;

    auto* generate = app.add_subcommand("generate", "Write a synthetic PR table and arrival schedule");
    generate->add_option("--config", config, "Workload or experiment config (JSON)")->required();
    generate->add_option("--out", out, "Output directory")->required();

    auto* replay = app.add_subcommand("replay", "Replay arrivals through the pipelines and write the event log");
    replay->add_option("--config", config, "Experiment config (JSON)")->required();
    replay->add_option("--out", out, "Output log file")->required();
    replay->add_option("--strategy", strategy, "Queue ordering");
    replay->add_option("--lookahead", lookahead, "Lookahead window");

    auto* train = app.add_subcommand("train", "Train the failure-likelihood model on an event log");
    train->add_option("--log", log, "Log file with PR and event records")->required();
    train->add_option("--out", out, "Model file")->required();
    train->add_option("--budget", budget, "Hyperparameter candidates");
    train->add_option("--seed", seed, "Seed");
    train->add_option("--clusters", clusters, "Changed-file clusters");
    train->add_option("--rounds", rounds, "Boosting rounds");

    auto* snapshot = app.add_subcommand("snapshot-eval", "Delay of failing PRs in reconstructed snapshots");
    snapshot->add_option("--log", log, "Log file with PR and event records")->required();
    snapshot->add_option("--model", model, "Model file (needed for predictive)");
    snapshot->add_option("--strategies", strategies, "Strategies")->delimiter(',');
    snapshot->add_option("--shuffles", shuffles, "FIFO reference shuffles");
    snapshot->add_option("--seed", seed, "Seed");
    snapshot->add_option("--out", out, "Output directory")->required();

    auto* simulate = app.add_subcommand("simulate", "Run the experiment grid");
    simulate->add_option("--config", config, "Experiment config (JSON)")->required();
    simulate->add_option("--model", model, "Model file; retrains per replication when omitted");
    simulate->add_option("--out", out, "Output directory (overrides the config)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*generate) return cmd_generate(config, out);
        if (*replay) return cmd_replay(config, strategy, lookahead, out);
        if (*train) return cmd_train(log, out, budget, seed, clusters, rounds);
        if (*snapshot) return cmd_snapshot_eval(log, model, strategies, shuffles, seed, out);
        if (*simulate) return cmd_simulate(config, model, out);
    } catch (const std::exception& e) {
        std::cerr << "mergeflow: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
