#pragma once

// Per-PR feature extraction for the failure-likelihood model.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mergeflow/core.hpp"

namespace mergeflow::predictor {

inline constexpr std::size_t kFeatureCount = 18;

enum Feature : std::size_t {
    kAdditions,
    kChangedFilesCount,
    kComments,
    kCommits,
    kDeletions,
    kDependsOnCount,
    kReviews,
    kChangedFilesCluster,
    kIsCyclicDependent,
    kPrAgeHours,
    kFilesInPrevResets,
    kPremergeFailures,
    kPremergeRuns,
    kPreviousMergeFailures,
    kAvgPremergeDuration,
    kChangeQueue,
    kHoursSinceLastPremergeFailure,
    kHoursSinceLastPremergeRun,
};

using FeatureVector = std::array<double, kFeatureCount>;

const std::array<std::string_view, kFeatureCount>& feature_names();

/// Value used for "hours since" features when there is no such event.
inline constexpr double kMissingHistory = -1.0;

/// Bag-of-words clustering of changed-file lists. Tokens are path
/// components; centroids come from seeded k-means++.
class FileClustering {
public:
    FileClustering() = default;

    /// Throws std::invalid_argument when the corpus is empty, k < 1 or
    /// k exceeds the corpus size.
    static FileClustering fit(std::span<const std::vector<std::string>> corpus, std::size_t k, std::uint64_t seed,
                              int max_iterations = 100);

    /// Nearest centroid; ties go to the lowest id. Unknown tokens are ignored.
    int assign(std::span<const std::string> files) const;

    std::size_t clusters() const { return centroids_.size(); }
    bool empty() const { return centroids_.empty(); }

    nlohmann::json to_json() const;
    static FileClustering from_json(const nlohmann::json& doc);

    bool operator==(const FileClustering&) const = default;

private:
    using SparseVector = std::vector<std::pair<std::uint32_t, double>>;
    SparseVector vectorize(std::span<const std::string> files) const;
    int nearest(const SparseVector& v) const;
    void refresh_norms();

    std::vector<std::string> vocabulary_;  // sorted
    std::vector<std::vector<double>> centroids_;
    std::vector<double> norms_;  // squared centroid norms
};

/// Splits a path into its components ("a/b/c.cpp" -> a, b, c.cpp).
std::vector<std::string> path_tokens(std::string_view path);

/// Features that depend only on the PR and the decision time.
void fill_static_features(const PullRequest& pr, Minutes now, const FileClustering* clustering,
                          FeatureVector& out);

/// Reference extraction: scans `history` and uses only events strictly
/// before `now`. `pipeline` is the queue the PR is (or will be) in.
FeatureVector extract_features(const PullRequest& pr, PipelineId pipeline, std::span<const EventRecord> history,
                               const PrTable& prs, Minutes now, const FileClustering* clustering = nullptr);

/// Incremental equivalent of extract_features for a growing log. Call
/// observe() for every event in order; features() reflects everything
/// observed so far.
class HistoryTracker {
public:
    explicit HistoryTracker(const PrTable& prs) : prs_(&prs) {}

    void observe(const EventRecord& ev);
    FeatureVector features(const PullRequest& pr, PipelineId pipeline, Minutes now,
                           const FileClustering* clustering = nullptr) const;

private:
    const PrTable* prs_;
    std::map<PipelineId, std::unordered_set<std::string>> reset_files_;
    std::unordered_map<PrId, int> merge_failures_;
};

}  // namespace mergeflow::predictor
