#pragma once

// Training-set construction, model selection and the packaged predictor.

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mergeflow/core.hpp"
#include "mergeflow/features.hpp"
#include "mergeflow/gbdt.hpp"
#include "mergeflow/random.hpp"

namespace mergeflow::predictor {

struct LabeledRow {
    FeatureVector features{};
    int label = 0;  // 1 = failed in the merge pipeline
    PrId pr_id = 0;
    Minutes time = 0;  // enqueue time the features were taken at
};

/// Decides whether a BUILD_FAIL is the PR's own failure while scanning a log
/// in order. A failure is not attributable when one of the PR's dependencies
/// failed or was dropped at or before that time and has not merged since.
class AttributionTracker {
public:
    explicit AttributionTracker(const PrTable& prs) : prs_(&prs) {}

    /// Ask before observe() for the same event.
    bool attributable(const EventRecord& fail) const;
    void observe(const EventRecord& ev);

private:
    const PrTable* prs_;
    std::unordered_map<PrId, Minutes> failed_at_;
    std::unordered_map<PrId, Minutes> merged_at_;
};

struct DatasetOptions {
    const FileClustering* clustering = nullptr;
};

/// One label-1 row per attributable BUILD_FAIL and one label-0 row per
/// passing attempt that ran concurrently with, and started no later than, a
/// failing attempt in the same pipeline. Throws LogError on malformed logs.
std::vector<LabeledRow> build_training_set(const EventLog& log, const PrTable& prs,
                                           const DatasetOptions& options = {});

Matrix to_matrix(std::span<const LabeledRow> rows);
std::vector<int> labels_of(std::span<const LabeledRow> rows);

/// Average precision: ranks by descending score, equal scores form one step.
/// Throws std::invalid_argument without positives or on a size mismatch.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct TuneOptions {
    std::size_t budget = 16;
    std::size_t folds = 3;
    std::uint64_t seed = 0;
    int n_rounds = 200;
};

struct TuneResult {
    Hyperparams best;
    double best_score = 0.0;
    std::vector<Hyperparams> trials;
    std::vector<double> scores;
};

/// Draws one candidate from the search space.
Hyperparams sample_hyperparams(rnd::Engine& rng, int n_rounds);

/// Seeded random search maximising mean PR-AUC over forward-chained,
/// class-stratified time blocks. Throws std::invalid_argument when a block
/// would lack either class.
TuneResult tune(std::span<const LabeledRow> rows, const TuneOptions& options);

/// Train/validation index split for fold `k` of forward chaining.
struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validate;
};
std::vector<FoldSplit> time_folds(std::span<const LabeledRow> rows, std::size_t folds);

/// Clustering plus trained ensemble; what the CLI writes as a model file.
struct FailurePredictor {
    FileClustering clustering;
    GbdtModel model;

    double predict(const FeatureVector& fv) const { return model.predict(fv); }

    nlohmann::json to_json() const;
    static FailurePredictor from_json(const nlohmann::json& doc);
};

struct TrainingReport {
    std::size_t rows = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double cv_pr_auc = 0.0;
    Hyperparams params;
};

struct FitOptions {
    std::size_t clusters = 16;
    TuneOptions tuning;
};

/// Clusters changed files, builds the training set, tunes and trains.
FailurePredictor fit_predictor(const EventLog& log, const PrTable& prs, const FitOptions& options,
                               TrainingReport* report = nullptr);

}  // namespace mergeflow::predictor
