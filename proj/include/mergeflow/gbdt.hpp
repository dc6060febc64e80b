#pragma once

// Second-order gradient boosted regression trees on binary log-loss.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace mergeflow::predictor {

struct Hyperparams {
    int max_depth = 6;
    double min_child_weight = 1.0;
    double gamma = 0.0;
    double subsample = 1.0;
    double colsample_bytree = 1.0;
    double learning_rate = 0.1;
    double reg_alpha = 0.0;
    double reg_lambda = 1.0;
    int n_rounds = 200;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;

    bool operator==(const Hyperparams&) const = default;
};

nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& doc);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // rows with x <= threshold go left
    int left = -1;
    int right = -1;
    double weight = 0.0;  // leaf output before the learning rate

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double evaluate(std::span<const double> x) const;
    int depth() const;
    bool operator==(const Tree&) const = default;
};

class TrainingError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major feature matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct GbdtModel {
    std::vector<Tree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0;  // prior log-odds
    std::size_t feature_count = 0;
    Hyperparams params;

    double margin(std::span<const double> x) const;
    /// Failure probability. Throws std::invalid_argument on a width mismatch.
    double predict(std::span<const double> x) const;

    nlohmann::json to_json() const;
    static GbdtModel from_json(const nlohmann::json& doc);

    bool operator==(const GbdtModel&) const = default;
};

struct TrainOptions {
    std::uint64_t seed = 0;
    /// Maximum histogram bins per feature.
    std::size_t max_bins = 256;
    /// Use the serial histogram kernel instead of the OpenMP one.
    bool serial = false;
};

/// Per-round training log-loss, filled when passed to train().
struct TrainTrace {
    std::vector<double> loss;
};

/// Throws TrainingError when labels hold a single class or are not 0/1.
GbdtModel train(const Matrix& x, std::span<const int> labels, const Hyperparams& hp, const TrainOptions& options,
                TrainTrace* trace = nullptr);

double sigmoid(double z);
double log_loss(std::span<const double> probabilities, std::span<const int> labels);

}  // namespace mergeflow::predictor
