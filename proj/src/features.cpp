#include "mergeflow/features.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

#include "mergeflow/random.hpp"

namespace mergeflow::predictor {

const std::array<std::string_view, kFeatureCount>& feature_names() {
    static const std::array<std::string_view, kFeatureCount> names{
        "additions",
        "changed_files_count",
        "comments",
        "commits",
        "deletions",
        "depends_on_count",
        "reviews",
        "changed_files_cluster",
        "is_cyclic_dependent",
        "pr_age_hours",
        "files_in_prev_resets",
        "premerge_failures",
        "premerge_runs",
        "previous_merge_failures",
        "avg_premerge_duration",
        "change_queue",
        "hours_since_last_premerge_failure",
        "hours_since_last_premerge_run",
    };
    return names;
}

std::vector<std::string> path_tokens(std::string_view path) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto end = std::min(path.find('/', start), path.size());
        if (end > start) out.emplace_back(path.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

FileClustering::SparseVector FileClustering::vectorize(std::span<const std::string> files) const {
    std::map<std::uint32_t, double> counts;
    for (const auto& file : files) {
        for (const auto& token : path_tokens(file)) {
            auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), token);
            if (it != vocabulary_.end() && *it == token)
                counts[static_cast<std::uint32_t>(it - vocabulary_.begin())] += 1.0;
        }
    }
    return {counts.begin(), counts.end()};
}

namespace {

double squared_norm(const std::vector<double>& c) {
    double s = 0.0;
    for (double v : c) s += v * v;
    return s;
}

}  // namespace

void FileClustering::refresh_norms() {
    norms_.clear();
    for (const auto& c : centroids_) norms_.push_back(squared_norm(c));
}

int FileClustering::nearest(const SparseVector& v) const {
    double x2 = 0.0;
    for (const auto& [i, value] : v) x2 += value * value;
    int best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids_.size(); ++c) {
        const auto& centroid = centroids_[c];
        double dot = 0.0;
        for (const auto& [i, value] : v) dot += value * centroid[i];
        const double d = x2 - 2.0 * dot + norms_[c];
        if (d < best_distance) {
            best_distance = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

FileClustering FileClustering::fit(std::span<const std::vector<std::string>> corpus, std::size_t k,
                                   std::uint64_t seed, int max_iterations) {
    if (corpus.empty()) throw std::invalid_argument("clustering corpus is empty");
    if (k < 1) throw std::invalid_argument("cluster count must be at least 1");
    if (k > corpus.size()) throw std::invalid_argument("cluster count exceeds corpus size");

    FileClustering model;
    std::set<std::string> vocabulary;
    for (const auto& files : corpus)
        for (const auto& file : files)
            for (auto& token : path_tokens(file)) vocabulary.insert(std::move(token));
    model.vocabulary_.assign(vocabulary.begin(), vocabulary.end());
    const std::size_t dims = model.vocabulary_.size();

    std::vector<SparseVector> points;
    points.reserve(corpus.size());
    for (const auto& files : corpus) points.push_back(model.vectorize(files));

    const auto densify = [&](const SparseVector& v) {
        std::vector<double> dense(dims, 0.0);
        for (const auto& [i, value] : v) dense[i] = value;
        return dense;
    };

    // k-means++ seeding.
    rnd::Engine rng(seed);
    std::vector<bool> chosen(points.size(), false);
    std::size_t first = static_cast<std::size_t>(rnd::index(rng, points.size()));
    chosen[first] = true;
    model.centroids_.push_back(densify(points[first]));
    model.refresh_norms();
    std::vector<double> d2(points.size());
    while (model.centroids_.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int c = model.nearest(points[i]);
            double x2 = 0.0, dot = 0.0;
            for (const auto& [j, value] : points[i]) {
                x2 += value * value;
                dot += value * model.centroids_[static_cast<std::size_t>(c)][j];
            }
            d2[i] = std::max(0.0, x2 - 2.0 * dot + model.norms_[static_cast<std::size_t>(c)]);
            total += d2[i];
        }
        std::size_t pick = points.size();
        if (total > 0.0) {
            double target = rnd::uniform01(rng) * total;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                target -= d2[i];
                if (target < 0.0) break;
            }
        } else {
            // All points coincide with a centroid; take the first unused one.
            for (std::size_t i = 0; i < points.size() && pick == points.size(); ++i)
                if (!chosen[i]) pick = i;
        }
        chosen[pick] = true;
        model.centroids_.push_back(densify(points[pick]));
        model.refresh_norms();
    }

    // Lloyd iterations; an emptied cluster keeps its previous centroid.
    std::vector<int> assignment(points.size(), -1);
    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int c = model.nearest(points[i]);
            if (c != assignment[i]) {
                assignment[i] = c;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
        std::vector<std::size_t> members(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<std::size_t>(assignment[i]);
            ++members[c];
            for (const auto& [j, value] : points[i]) sums[c][j] += value;
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (members[c] == 0) continue;
            for (auto& v : sums[c]) v /= static_cast<double>(members[c]);
            model.centroids_[c] = std::move(sums[c]);
        }
        model.refresh_norms();
    }
    return model;
}

int FileClustering::assign(std::span<const std::string> files) const {
    if (centroids_.empty()) return 0;
    return nearest(vectorize(files));
}

nlohmann::json FileClustering::to_json() const {
    return {{"vocabulary", vocabulary_}, {"centroids", centroids_}};
}

FileClustering FileClustering::from_json(const nlohmann::json& doc) {
    FileClustering model;
    model.vocabulary_ = doc.at("vocabulary").get<std::vector<std::string>>();
    model.centroids_ = doc.at("centroids").get<std::vector<std::vector<double>>>();
    if (!std::is_sorted(model.vocabulary_.begin(), model.vocabulary_.end()))
        throw std::invalid_argument("clustering vocabulary must be sorted");
    for (const auto& c : model.centroids_)
        if (c.size() != model.vocabulary_.size()) throw std::invalid_argument("centroid width mismatch");
    model.refresh_norms();
    return model;
}

void fill_static_features(const PullRequest& pr, Minutes now, const FileClustering* clustering,
                          FeatureVector& out) {
    out[kAdditions] = static_cast<double>(pr.additions);
    out[kChangedFilesCount] = static_cast<double>(pr.changed_files.size());
    out[kComments] = static_cast<double>(pr.comments);
    out[kCommits] = static_cast<double>(pr.commits);
    out[kDeletions] = static_cast<double>(pr.deletions);
    out[kDependsOnCount] = static_cast<double>(pr.depends_on.size());
    out[kReviews] = static_cast<double>(pr.reviews);
    out[kChangedFilesCluster] = clustering ? static_cast<double>(clustering->assign(pr.changed_files)) : 0.0;
    out[kIsCyclicDependent] = pr.is_cyclic_dependent ? 1.0 : 0.0;
    out[kPrAgeHours] = static_cast<double>(now - pr.created_at) / 60.0;
    out[kChangeQueue] = static_cast<double>(pr.change_queue);

    std::int64_t runs = 0, failures = 0;
    double duration_sum = 0.0;
    std::optional<Minutes> last_run, last_failure;
    for (const auto& run : pr.premerge_runs) {
        if (run.finished_at >= now) continue;
        ++runs;
        duration_sum += run.duration;
        if (!last_run || run.finished_at > *last_run) last_run = run.finished_at;
        if (!run.passed) {
            ++failures;
            if (!last_failure || run.finished_at > *last_failure) last_failure = run.finished_at;
        }
    }
    out[kPremergeRuns] = static_cast<double>(runs);
    out[kPremergeFailures] = static_cast<double>(failures);
    out[kAvgPremergeDuration] = runs > 0 ? duration_sum / static_cast<double>(runs) : 0.0;
    out[kHoursSinceLastPremergeRun] = last_run ? static_cast<double>(now - *last_run) / 60.0 : kMissingHistory;
    out[kHoursSinceLastPremergeFailure] =
        last_failure ? static_cast<double>(now - *last_failure) / 60.0 : kMissingHistory;
}

namespace {

double overlap(const PullRequest& pr, const std::unordered_set<std::string>& files) {
    std::size_t n = 0;
    for (const auto& f : pr.changed_files)
        if (files.contains(f)) ++n;
    return static_cast<double>(n);
}

}  // namespace

FeatureVector extract_features(const PullRequest& pr, PipelineId pipeline, std::span<const EventRecord> history,
                               const PrTable& prs, Minutes now, const FileClustering* clustering) {
    FeatureVector out{};
    fill_static_features(pr, now, clustering, out);

    std::unordered_set<std::string> reset_files;
    int merge_failures = 0;
    for (const auto& ev : history) {
        if (ev.time >= now) continue;
        if (ev.kind == EventKind::BuildFail && ev.pr_id == pr.id) ++merge_failures;
        if (ev.kind == EventKind::Reset && ev.pipeline == pipeline && ev.caused_by) {
            if (const auto* culprit = prs.find(*ev.caused_by))
                reset_files.insert(culprit->changed_files.begin(), culprit->changed_files.end());
        }
    }
    out[kFilesInPrevResets] = overlap(pr, reset_files);
    out[kPreviousMergeFailures] = static_cast<double>(merge_failures);
    return out;
}

void HistoryTracker::observe(const EventRecord& ev) {
    if (ev.kind == EventKind::BuildFail) ++merge_failures_[ev.pr_id];
    if (ev.kind == EventKind::Reset && ev.caused_by) {
        if (const auto* culprit = prs_->find(*ev.caused_by)) {
            auto& files = reset_files_[ev.pipeline];
            files.insert(culprit->changed_files.begin(), culprit->changed_files.end());
        }
    }
}

FeatureVector HistoryTracker::features(const PullRequest& pr, PipelineId pipeline, Minutes now,
                                       const FileClustering* clustering) const {
    FeatureVector out{};
    fill_static_features(pr, now, clustering, out);
    auto files = reset_files_.find(pipeline);
    out[kFilesInPrevResets] = files == reset_files_.end() ? 0.0 : overlap(pr, files->second);
    auto failures = merge_failures_.find(pr.id);
    out[kPreviousMergeFailures] = failures == merge_failures_.end() ? 0.0 : static_cast<double>(failures->second);
    return out;
}

}  // namespace mergeflow::predictor
