#include "mergeflow/training.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "mergeflow/kernels.hpp"

namespace mergeflow::predictor {

bool AttributionTracker::attributable(const EventRecord& fail) const {
    const auto* pr = prs_->find(fail.pr_id);
    if (!pr) return true;
    for (PrId dep : pr->depends_on) {
        auto f = failed_at_.find(dep);
        if (f == failed_at_.end()) continue;
        auto m = merged_at_.find(dep);
        if (m == merged_at_.end() || m->second < f->second) return false;
    }
    return true;
}

void AttributionTracker::observe(const EventRecord& ev) {
    switch (ev.kind) {
        case EventKind::BuildFail:
            failed_at_[ev.pr_id] = ev.time;
            break;
        case EventKind::Dequeue:
            // A DEQUEUE with caused_by is a dependency casualty.
            if (ev.caused_by) failed_at_[ev.pr_id] = ev.time;
            break;
        case EventKind::Merge:
            merged_at_[ev.pr_id] = ev.time;
            break;
        default:
            break;
    }
}

namespace {

enum class AttemptStatus { Running, Passed, Merged, Failed, Reset, Dropped };

struct Attempt {
    PrId pr = 0;
    PipelineId pipeline = 0;
    Minutes start = 0;
    Minutes end = 0;  // fail, reset, drop or merge time
    AttemptStatus status = AttemptStatus::Running;
    bool attributable_failure = false;
    FeatureVector features{};
    Minutes enqueued_at = 0;
};

}  // namespace

std::vector<LabeledRow> build_training_set(const EventLog& log, const PrTable& prs, const DatasetOptions& options) {
    check_event_log(log);
    for (const auto& ev : log)
        if (!prs.contains(ev.pr_id))
            throw LogError("event references unknown pr " + std::to_string(ev.pr_id));

    HistoryTracker history(prs);
    AttributionTracker attribution(prs);
    std::size_t observed = 0;

    struct Enqueued {
        FeatureVector features{};
        Minutes time = 0;
    };
    std::unordered_map<PrId, Enqueued> enqueued;
    std::vector<Attempt> attempts;
    std::map<std::pair<PipelineId, PrId>, std::size_t> open;  // attempt not yet merged/failed/reset

    for (const auto& ev : log) {
        // Features at time t may only see events strictly before t.
        while (observed < log.size() && log[observed].time < ev.time) history.observe(log[observed++]);

        const auto key = std::make_pair(ev.pipeline, ev.pr_id);
        switch (ev.kind) {
            case EventKind::Enqueue:
                enqueued[ev.pr_id] = {history.features(prs.at(ev.pr_id), ev.pipeline, ev.time, options.clustering),
                                      ev.time};
                break;
            case EventKind::BuildStart: {
                if (open.contains(key)) break;  // restart after RESCHEDULE keeps the new attempt below
                Attempt a;
                a.pr = ev.pr_id;
                a.pipeline = ev.pipeline;
                a.start = ev.time;
                if (auto it = enqueued.find(ev.pr_id); it != enqueued.end()) {
                    a.features = it->second.features;
                    a.enqueued_at = it->second.time;
                } else {
                    a.features = history.features(prs.at(ev.pr_id), ev.pipeline, ev.time, options.clustering);
                    a.enqueued_at = ev.time;
                }
                open[key] = attempts.size();
                attempts.push_back(a);
                break;
            }
            case EventKind::BuildPass:
                if (auto it = open.find(key); it != open.end()) attempts[it->second].status = AttemptStatus::Passed;
                break;
            case EventKind::BuildFail:
                if (auto it = open.find(key); it != open.end()) {
                    auto& a = attempts[it->second];
                    a.status = AttemptStatus::Failed;
                    a.end = ev.time;
                    a.attributable_failure = attribution.attributable(ev);
                    open.erase(it);
                }
                break;
            case EventKind::Merge:
                if (auto it = open.find(key); it != open.end()) {
                    attempts[it->second].status = AttemptStatus::Merged;
                    attempts[it->second].end = ev.time;
                    open.erase(it);
                }
                break;
            case EventKind::Reset:
                if (auto it = open.find(key); it != open.end()) {
                    attempts[it->second].status = AttemptStatus::Reset;
                    attempts[it->second].end = ev.time;
                    open.erase(it);
                }
                break;
            case EventKind::Dequeue:
                if (auto it = open.find(key); it != open.end()) {
                    attempts[it->second].status = AttemptStatus::Dropped;
                    attempts[it->second].end = ev.time;
                    open.erase(it);
                }
                break;
            case EventKind::Reschedule:
                break;
        }
        attribution.observe(ev);
    }

    std::vector<LabeledRow> rows;
    std::vector<bool> used(attempts.size(), false);
    for (std::size_t f = 0; f < attempts.size(); ++f) {
        const auto& fail = attempts[f];
        if (fail.status != AttemptStatus::Failed || !fail.attributable_failure) continue;
        rows.push_back({fail.features, 1, fail.pr, fail.enqueued_at});
        for (std::size_t p = 0; p < attempts.size(); ++p) {
            const auto& pass = attempts[p];
            if (used[p] || pass.status != AttemptStatus::Merged || pass.pipeline != fail.pipeline) continue;
            if (pass.start <= fail.start && pass.end > fail.start) {
                used[p] = true;
                rows.push_back({pass.features, 0, pass.pr, pass.enqueued_at});
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const LabeledRow& a, const LabeledRow& b) {
        return std::tie(a.time, a.pr_id, a.label) < std::tie(b.time, b.pr_id, b.label);
    });
    return rows;
}

Matrix to_matrix(std::span<const LabeledRow> rows) {
    Matrix x(rows.size(), kFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].features.begin(), rows[i].features.end(), x.row(i).begin());
    return x;
}

std::vector<int> labels_of(std::span<const LabeledRow> rows) {
    std::vector<int> y;
    y.reserve(rows.size());
    for (const auto& r : rows) y.push_back(r.label);
    return y;
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0.0) throw std::invalid_argument("pr_auc needs at least one positive label");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double tp = 0.0, fp = 0.0, recall_prev = 0.0, area = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? tp : fp) += 1.0;
            ++j;
        }
        const double recall = tp / positives;
        area += (recall - recall_prev) * (tp / (tp + fp));
        recall_prev = recall;
        i = j;
    }
    return area;
}

Hyperparams sample_hyperparams(rnd::Engine& rng, int n_rounds) {
    const auto log_uniform = [&](double lo, double hi) { return std::exp(rnd::uniform(rng, std::log(lo), std::log(hi))); };
    Hyperparams hp;
    hp.max_depth = 2 + static_cast<int>(rnd::index(rng, 7));  // 2..8
    hp.min_child_weight = log_uniform(0.1, 10.0);
    hp.gamma = rnd::uniform(rng, 0.0, 2.0);
    hp.subsample = rnd::uniform(rng, 0.5, 1.0);
    hp.colsample_bytree = rnd::uniform(rng, 0.5, 1.0);
    hp.learning_rate = log_uniform(0.01, 0.3);
    hp.reg_alpha = rnd::uniform(rng, 0.0, 2.0);
    hp.reg_lambda = log_uniform(0.1, 10.0);
    hp.n_rounds = n_rounds;
    return hp;
}

std::vector<FoldSplit> time_folds(std::span<const LabeledRow> rows, std::size_t folds) {
    if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(rows[a].time, rows[a].pr_id) < std::tie(rows[b].time, rows[b].pr_id);
    });
    std::vector<std::size_t> pos, neg;
    for (auto i : order) (rows[i].label == 1 ? pos : neg).push_back(i);
    if (pos.size() < folds || neg.size() < folds)
        throw std::invalid_argument("too few rows of each class for " + std::to_string(folds) + " stratified folds");

    // Contiguous time blocks per class, so every block keeps the class mix.
    std::vector<std::vector<std::size_t>> blocks(folds);
    for (const auto* cls : {&pos, &neg})
        for (std::size_t i = 0; i < cls->size(); ++i) blocks[i * folds / cls->size()].push_back((*cls)[i]);

    std::vector<FoldSplit> splits;
    for (std::size_t k = 1; k < folds; ++k) {
        FoldSplit s;
        for (std::size_t b = 0; b < k; ++b) s.train.insert(s.train.end(), blocks[b].begin(), blocks[b].end());
        s.validate = blocks[k];
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.validate.begin(), s.validate.end());
        splits.push_back(std::move(s));
    }
    return splits;
}

namespace {

std::vector<LabeledRow> pick(std::span<const LabeledRow> rows, const std::vector<std::size_t>& idx) {
    std::vector<LabeledRow> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(rows[i]);
    return out;
}

}  // namespace

TuneResult tune(std::span<const LabeledRow> rows, const TuneOptions& options) {
    if (options.budget < 1) throw std::invalid_argument("tuning budget must be at least 1");
    const auto splits = time_folds(rows, options.folds);

    TuneResult result;
    rnd::Engine rng(options.seed);
    for (std::size_t t = 0; t < options.budget; ++t) result.trials.push_back(sample_hyperparams(rng, options.n_rounds));
    result.scores.assign(options.budget, 0.0);

    struct Prepared {
        Matrix train_x, valid_x;
        std::vector<int> train_y, valid_y;
    };
    std::vector<Prepared> prepared;
    for (const auto& s : splits) {
        const auto train_rows = pick(rows, s.train);
        const auto valid_rows = pick(rows, s.validate);
        prepared.push_back({to_matrix(train_rows), to_matrix(valid_rows), labels_of(train_rows), labels_of(valid_rows)});
    }

    const auto trials = static_cast<std::ptrdiff_t>(options.budget);
#pragma omp parallel for schedule(dynamic) if (kernels::max_threads() > 1)
    for (std::ptrdiff_t t = 0; t < trials; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        double total = 0.0;
        for (std::size_t k = 0; k < prepared.size(); ++k) {
            const auto& p = prepared[k];
            TrainOptions to;
            to.seed = rnd::derive(options.seed, ti * 1000 + k);
            to.serial = true;
            const auto model = train(p.train_x, p.train_y, result.trials[ti], to);
            std::vector<double> scores(p.valid_x.rows);
            for (std::size_t i = 0; i < p.valid_x.rows; ++i) scores[i] = model.predict(p.valid_x.row(i));
            total += pr_auc(scores, p.valid_y);
        }
        result.scores[ti] = total / static_cast<double>(prepared.size());
    }

    std::size_t best = 0;
    for (std::size_t t = 1; t < result.scores.size(); ++t)
        if (result.scores[t] > result.scores[best]) best = t;
    result.best = result.trials[best];
    result.best_score = result.scores[best];
    return result;
}

nlohmann::json FailurePredictor::to_json() const {
    nlohmann::json names = nlohmann::json::array();
    for (auto n : feature_names()) names.push_back(std::string(n));
    return {
        {"format", "mergeflow-model"},
        {"version", "1.0"},
        {"feature_names", names},
        {"clustering", clustering.to_json()},
        {"gbdt", model.to_json()},
    };
}

FailurePredictor FailurePredictor::from_json(const nlohmann::json& doc) {
    if (doc.value("format", std::string{}) != "mergeflow-model")
        throw std::invalid_argument("not a mergeflow model document");
    const auto version = doc.value("version", std::string{});
    if (version.substr(0, version.find('.')) != "1")
        throw std::invalid_argument("unsupported model version " + version);
    const auto names = doc.at("feature_names").get<std::vector<std::string>>();
    if (names.size() != kFeatureCount) throw std::invalid_argument("model feature list has the wrong length");
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (names[i] != feature_names()[i]) throw std::invalid_argument("model feature order differs: " + names[i]);
    FailurePredictor p;
    p.clustering = FileClustering::from_json(doc.at("clustering"));
    p.model = GbdtModel::from_json(doc.at("gbdt"));
    if (p.model.feature_count != kFeatureCount) throw std::invalid_argument("model feature count mismatch");
    return p;
}

FailurePredictor fit_predictor(const EventLog& log, const PrTable& prs, const FitOptions& options,
                               TrainingReport* report) {
    std::vector<std::vector<std::string>> corpus;
    std::unordered_set<PrId> seen;
    for (const auto& ev : log)
        if (ev.kind == EventKind::Enqueue && seen.insert(ev.pr_id).second)
            corpus.push_back(prs.at(ev.pr_id).changed_files);
    if (corpus.empty()) throw TrainingError("log holds no enqueued pull requests");

    FailurePredictor predictor;
    predictor.clustering = FileClustering::fit(corpus, std::min(options.clusters, corpus.size()),
                                               rnd::derive(options.tuning.seed, 7));
    const auto rows = build_training_set(log, prs, {&predictor.clustering});
    const auto y = labels_of(rows);
    const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (positives == 0 || positives == rows.size())
        throw TrainingError("training set holds a single class (" + std::to_string(positives) + " failing of " +
                            std::to_string(rows.size()) + " rows)");

    const auto tuned = tune(rows, options.tuning);
    TrainOptions to;
    to.seed = rnd::derive(options.tuning.seed, 99);
    predictor.model = train(to_matrix(rows), y, tuned.best, to);
    if (report) {
        report->rows = rows.size();
        report->positives = positives;
        report->negatives = rows.size() - positives;
        report->cv_pr_auc = tuned.best_score;
        report->params = tuned.best;
    }
    return predictor;
}

}  // namespace mergeflow::predictor
