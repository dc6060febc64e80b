#include "mergeflow/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mergeflow/kernels.hpp"
#include "mergeflow/random.hpp"

namespace mergeflow::predictor {

void Hyperparams::validate() const {
    const auto fail = [](const std::string& what) { throw std::invalid_argument("hyperparameter " + what); };
    if (max_depth < 1) fail("max_depth must be >= 1");
    if (!(min_child_weight >= 0.0)) fail("min_child_weight must be >= 0");
    if (!(gamma >= 0.0)) fail("gamma must be >= 0");
    if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must be in (0, 1]");
    if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) fail("colsample_bytree must be in (0, 1]");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must be in (0, 1]");
    if (!(reg_alpha >= 0.0)) fail("reg_alpha must be >= 0");
    if (!(reg_lambda >= 0.0)) fail("reg_lambda must be >= 0");
    if (n_rounds < 0) fail("n_rounds must be >= 0");
}

nlohmann::json to_json(const Hyperparams& hp) {
    return {
        {"max_depth", hp.max_depth},
        {"min_child_weight", hp.min_child_weight},
        {"gamma", hp.gamma},
        {"subsample", hp.subsample},
        {"colsample_bytree", hp.colsample_bytree},
        {"learning_rate", hp.learning_rate},
        {"reg_alpha", hp.reg_alpha},
        {"reg_lambda", hp.reg_lambda},
        {"n_rounds", hp.n_rounds},
    };
}

Hyperparams hyperparams_from_json(const nlohmann::json& doc) {
    Hyperparams hp;
    hp.max_depth = doc.value("max_depth", hp.max_depth);
    hp.min_child_weight = doc.value("min_child_weight", hp.min_child_weight);
    hp.gamma = doc.value("gamma", hp.gamma);
    hp.subsample = doc.value("subsample", hp.subsample);
    hp.colsample_bytree = doc.value("colsample_bytree", hp.colsample_bytree);
    hp.learning_rate = doc.value("learning_rate", hp.learning_rate);
    hp.reg_alpha = doc.value("reg_alpha", hp.reg_alpha);
    hp.reg_lambda = doc.value("reg_lambda", hp.reg_lambda);
    hp.n_rounds = doc.value("n_rounds", hp.n_rounds);
    hp.validate();
    return hp;
}

double Tree::evaluate(std::span<const double> x) const {
    if (nodes.empty()) return 0.0;
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].weight;
}

int Tree::depth() const {
    if (nodes.empty()) return 0;
    int deepest = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        const auto& n = nodes[static_cast<std::size_t>(i)];
        if (n.is_leaf()) {
            deepest = std::max(deepest, d);
        } else {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return deepest;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_loss(std::span<const double> probabilities, std::span<const int> labels) {
    constexpr double eps = 1e-15;
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
        sum -= labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return labels.empty() ? 0.0 : sum / static_cast<double>(labels.size());
}

double GbdtModel::margin(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.evaluate(x);
    return base_score + learning_rate * sum;
}

double GbdtModel::predict(std::span<const double> x) const {
    if (x.size() != feature_count)
        throw std::invalid_argument("feature vector has " + std::to_string(x.size()) + " components, model expects " +
                                    std::to_string(feature_count));
    constexpr double eps = 1e-15;
    return std::clamp(sigmoid(margin(x)), eps, 1.0 - eps);
}

nlohmann::json GbdtModel::to_json() const {
    nlohmann::json trees_json = nlohmann::json::array();
    for (const auto& t : trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(),
                       weight = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            weight.push_back(n.weight);
        }
        trees_json.push_back(
            {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"weight", weight}});
    }
    return {
        {"learning_rate", learning_rate},
        {"base_score", base_score},
        {"feature_count", feature_count},
        {"hyperparams", predictor::to_json(params)},
        {"trees", trees_json},
    };
}

GbdtModel GbdtModel::from_json(const nlohmann::json& doc) {
    GbdtModel m;
    m.learning_rate = doc.at("learning_rate").get<double>();
    m.base_score = doc.at("base_score").get<double>();
    m.feature_count = doc.at("feature_count").get<std::size_t>();
    m.params = hyperparams_from_json(doc.at("hyperparams"));
    for (const auto& tj : doc.at("trees")) {
        const auto feature = tj.at("feature").get<std::vector<int>>();
        const auto threshold = tj.at("threshold").get<std::vector<double>>();
        const auto left = tj.at("left").get<std::vector<int>>();
        const auto right = tj.at("right").get<std::vector<int>>();
        const auto weight = tj.at("weight").get<std::vector<double>>();
        const auto n = feature.size();
        if (threshold.size() != n || left.size() != n || right.size() != n || weight.size() != n)
            throw std::invalid_argument("tree arrays differ in length");
        Tree t;
        for (std::size_t i = 0; i < n; ++i) {
            TreeNode node{feature[i], threshold[i], left[i], right[i], weight[i]};
            if (!node.is_leaf()) {
                if (static_cast<std::size_t>(node.feature) >= m.feature_count)
                    throw std::invalid_argument("tree node feature index out of range");
                if (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
                    static_cast<std::size_t>(node.left) >= n || static_cast<std::size_t>(node.right) >= n)
                    throw std::invalid_argument("tree node child index out of range");
            }
            t.nodes.push_back(node);
        }
        m.trees.push_back(std::move(t));
    }
    return m;
}

namespace {

struct FeatureCuts {
    std::vector<std::vector<double>> cuts;  // per feature, ascending; last = max value
};

FeatureCuts make_cuts(const Matrix& x, std::size_t max_bins) {
    FeatureCuts out;
    out.cuts.resize(x.cols);
    std::vector<double> column(x.rows);
    for (std::size_t f = 0; f < x.cols; ++f) {
        for (std::size_t i = 0; i < x.rows; ++i) column[i] = x(i, f);
        std::sort(column.begin(), column.end());
        std::vector<double> unique;
        std::unique_copy(column.begin(), column.end(), std::back_inserter(unique));
        if (unique.size() <= max_bins) {
            out.cuts[f] = std::move(unique);
            continue;
        }
        std::vector<double> cuts;
        for (std::size_t b = 1; b <= max_bins; ++b) {
            const std::size_t idx = (b * column.size() + max_bins - 1) / max_bins - 1;
            const double v = column[std::min(idx, column.size() - 1)];
            if (cuts.empty() || v > cuts.back()) cuts.push_back(v);
        }
        if (cuts.back() < column.back()) cuts.push_back(column.back());
        out.cuts[f] = std::move(cuts);
    }
    return out;
}

kernels::BinnedMatrix bin_matrix(const Matrix& x, const FeatureCuts& cuts) {
    kernels::BinnedMatrix b;
    b.rows = x.rows;
    b.features = x.cols;
    b.codes.resize(x.rows * x.cols);
    b.offsets.assign(x.cols + 1, 0);
    for (std::size_t f = 0; f < x.cols; ++f) {
        const auto& c = cuts.cuts[f];
        b.offsets[f + 1] = b.offsets[f] + c.size();
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto it = std::lower_bound(c.begin(), c.end(), x(i, f));
            b.codes[f * x.rows + i] = static_cast<std::uint16_t>(it - c.begin());
        }
    }
    return b;
}

class TreeBuilder {
public:
    TreeBuilder(const kernels::BinnedMatrix& bins, const FeatureCuts& cuts, std::span<const kernels::GradPair> gpair,
                const Hyperparams& hp, std::vector<int> features, bool serial)
        : bins_(bins), cuts_(cuts), gpair_(gpair), hp_(hp), features_(std::move(features)), serial_(serial),
          hist_(bins.total_bins()) {}

    Tree build(std::vector<std::uint32_t> rows) {
        Tree tree;
        grow(tree, std::move(rows), 0);
        return tree;
    }

private:
    double threshold_l1(double g) const {
        if (g > hp_.reg_alpha) return g - hp_.reg_alpha;
        if (g < -hp_.reg_alpha) return g + hp_.reg_alpha;
        return 0.0;
    }

    double score(double g, double h) const {
        const double denom = h + hp_.reg_lambda;
        if (denom <= 0.0) return 0.0;
        const double t = threshold_l1(g);
        return t * t / denom;
    }

    double leaf_weight(double g, double h) const {
        const double denom = h + hp_.reg_lambda;
        if (denom <= 0.0) return 0.0;
        return -threshold_l1(g) / denom;
    }

    int grow(Tree& tree, std::vector<std::uint32_t> rows, int depth) {
        double g = 0.0, h = 0.0;
        for (auto r : rows) {
            g += gpair_[r].grad;
            h += gpair_[r].hess;
        }
        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, leaf_weight(g, h)});
        if (depth >= hp_.max_depth || rows.size() < 2) return index;

        if (serial_)
            kernels::histogram_serial(bins_, rows, gpair_, features_, hist_);
        else
            kernels::histogram_parallel(bins_, rows, gpair_, features_, hist_);

        const double parent = score(g, h);
        double best_gain = 0.0;
        int best_feature = -1;
        std::size_t best_bin = 0;
        for (int f : features_) {
            const auto fi = static_cast<std::size_t>(f);
            const std::size_t base = bins_.offsets[fi];
            const std::size_t nbins = bins_.offsets[fi + 1] - base;
            double gl = 0.0, hl = 0.0;
            for (std::size_t b = 0; b + 1 < nbins; ++b) {
                gl += hist_[base + b].grad;
                hl += hist_[base + b].hess;
                const double gr = g - gl, hr = h - hl;
                if (hl <= 0.0 || hr <= 0.0) continue;
                if (hl < hp_.min_child_weight || hr < hp_.min_child_weight) continue;
                const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent) - hp_.gamma;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_bin = b;
                }
            }
        }
        if (best_feature < 0) return index;

        std::vector<std::uint32_t> left, right;
        const auto fi = static_cast<std::size_t>(best_feature);
        for (auto r : rows) (bins_.code(fi, r) <= best_bin ? left : right).push_back(r);
        if (left.empty() || right.empty()) return index;
        rows.clear();
        rows.shrink_to_fit();

        tree.nodes[static_cast<std::size_t>(index)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(index)].threshold = cuts_.cuts[fi][best_bin];
        const int l = grow(tree, std::move(left), depth + 1);
        const int r = grow(tree, std::move(right), depth + 1);
        tree.nodes[static_cast<std::size_t>(index)].left = l;
        tree.nodes[static_cast<std::size_t>(index)].right = r;
        return index;
    }

    const kernels::BinnedMatrix& bins_;
    const FeatureCuts& cuts_;
    std::span<const kernels::GradPair> gpair_;
    const Hyperparams& hp_;
    std::vector<int> features_;
    bool serial_;
    std::vector<kernels::GradPair> hist_;
};

}  // namespace

GbdtModel train(const Matrix& x, std::span<const int> labels, const Hyperparams& hp, const TrainOptions& options,
                TrainTrace* trace) {
    hp.validate();
    if (labels.size() != x.rows) throw TrainingError("label count does not match row count");
    if (options.max_bins < 2 || options.max_bins > 65535) throw TrainingError("max_bins must be in [2, 65535]");
    std::size_t positives = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw TrainingError("labels must be 0 or 1");
        positives += static_cast<std::size_t>(y);
    }
    if (positives == 0 || positives == labels.size())
        throw TrainingError("training data holds a single class");

    GbdtModel model;
    model.learning_rate = hp.learning_rate;
    model.feature_count = x.cols;
    model.params = hp;
    const double prior = static_cast<double>(positives) / static_cast<double>(labels.size());
    model.base_score = std::log(prior / (1.0 - prior));

    const auto cuts = make_cuts(x, options.max_bins);
    const auto bins = bin_matrix(x, cuts);
    std::vector<double> margins(x.rows, model.base_score);
    std::vector<kernels::GradPair> gpair(x.rows);
    std::vector<double> probs(x.rows);
    rnd::Engine rng(options.seed);

    std::vector<int> all_features(x.cols);
    std::iota(all_features.begin(), all_features.end(), 0);
    const auto column_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(hp.colsample_bytree * static_cast<double>(x.cols))));

    for (int round = 0; round < hp.n_rounds; ++round) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            const double p = sigmoid(margins[i]);
            gpair[i] = {p - static_cast<double>(labels[i]), std::max(p * (1.0 - p), 1e-16)};
        }

        std::vector<std::uint32_t> rows;
        rows.reserve(x.rows);
        if (hp.subsample < 1.0) {
            for (std::size_t i = 0; i < x.rows; ++i)
                if (rnd::uniform01(rng) < hp.subsample) rows.push_back(static_cast<std::uint32_t>(i));
        }
        if (rows.empty())
            for (std::size_t i = 0; i < x.rows; ++i) rows.push_back(static_cast<std::uint32_t>(i));

        std::vector<int> features = all_features;
        if (column_count < x.cols) {
            rnd::shuffle(std::span<int>(features), rng);
            features.resize(column_count);
            std::sort(features.begin(), features.end());
        }

        TreeBuilder builder(bins, cuts, gpair, hp, std::move(features), options.serial);
        model.trees.push_back(builder.build(std::move(rows)));
        const auto& tree = model.trees.back();
        for (std::size_t i = 0; i < x.rows; ++i) margins[i] += hp.learning_rate * tree.evaluate(x.row(i));

        if (trace) {
            for (std::size_t i = 0; i < x.rows; ++i) probs[i] = sigmoid(margins[i]);
            trace->loss.push_back(log_loss(probs, labels));
        }
    }
    return model;
}

}  // namespace mergeflow::predictor
