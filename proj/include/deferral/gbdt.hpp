#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deferral/featurizer.hpp"

namespace deferral {

struct GbdtParams {
    std::int32_t num_trees{100};
    double learning_rate{0.1};
    std::int32_t max_depth{6};  ///< 0 grows single-leaf trees
    std::int32_t max_leaves{31};
    std::int32_t min_samples_leaf{20};
    std::int32_t num_histogram_bins{64};
    double l2_leaf_regularization{1.0};
    std::uint64_t seed{1};

    /// Throws ConfigError.
    void validate() const;
    friend bool operator==(const GbdtParams&, const GbdtParams&) = default;
};

/// A node is a leaf when feature < 0. Rows with x[feature] <= threshold go left.
struct TreeNode {
    std::int32_t feature{-1};
    double threshold{0.0};
    std::int32_t left{-1};
    std::int32_t right{-1};
    double value{0.0};  ///< leaf output, before the learning rate
    double gain{0.0};   ///< split gain, 0 for leaves
};

struct Tree {
    std::vector<TreeNode> nodes;  ///< nodes[0] is the root
    double output(std::span<const double> row) const;
    std::size_t num_leaves() const;
};

struct Model {
    double base_score{0.0};  ///< prior log-odds
    double learning_rate{0.1};
    std::vector<Tree> trees;
    std::vector<std::string> feature_names;
    GbdtParams params;

    double margin(std::span<const double> row, std::size_t num_trees) const;
};

/// Newton leaf value -sum(g) / (sum(h) + lambda) with g = w(p - y), h = w p (1 - p).
double newton_leaf_value(double sum_grad, double sum_hess, double lambda) noexcept;

/// 0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)]
double split_gain(double gl, double hl, double gr, double hr, double lambda) noexcept;

struct SplitCandidate {
    std::int32_t feature{-1};
    double threshold{0.0};
    double gain{0.0};
    bool valid() const noexcept { return feature >= 0; }
};

/// Best split of one feature column by scanning every boundary between distinct values.
SplitCandidate exact_best_split(std::span<const double> values, std::span<const double> grad,
                                std::span<const double> hess, double lambda, std::size_t min_samples_leaf);

/// Per-feature bin boundaries. One bin per distinct value when they fit, quantile cuts otherwise.
struct FeatureBins {
    std::vector<double> upper;  ///< inclusive upper edge of each bin except the last (open) one
    std::uint16_t bin_of(double x) const noexcept;
    std::size_t num_bins() const noexcept { return upper.size() + 1; }
};

FeatureBins make_bins(std::span<const double> values, std::size_t max_bins);

/// Same search as exact_best_split over histogram bins.
SplitCandidate histogram_best_split(std::span<const double> values, const FeatureBins& bins,
                                    std::span<const double> grad, std::span<const double> hess, double lambda,
                                    std::size_t min_samples_leaf);

struct TrainTrace {
    /// Weighted mean logistic loss on the training set after 0, 1, ..., num_trees trees.
    std::vector<double> loss;
};

/// Throws DataError("degenerate labels") when only one class is present.
Model train(const Dataset& data, const GbdtParams& params, TrainTrace* trace = nullptr);

/// sigmoid(base + lr * sum of tree outputs). Throws ValidationError on a length mismatch.
double predict(const Model& model, std::span<const double> row);
/// Scores every row of `data`; columns are matched by name.
std::vector<double> predict(const Model& model, const Dataset& data, std::size_t num_trees = SIZE_MAX);

double weighted_log_loss(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                         std::span<const double> weights);

/// Sum of split gains per feature, normalised to sum to 1 when any split exists.
std::vector<double> feature_importance(const Model& model);

std::vector<GbdtParams> default_param_grid();

struct CvScore {
    GbdtParams params;
    double mean_f1{0.0};
    std::size_t folds_used{0};
};

struct CvResult {
    GbdtParams best;
    std::vector<CvScore> scores;
    std::vector<std::string> warnings;
};

/// Stratified k-fold search maximising mean validation F1 at threshold 0.5.
/// Ties go to fewer trees, then lower depth, then grid order.
/// Throws ValidationError for k < 2, an empty grid, or fewer positives than folds.
CvResult cross_validate(const Dataset& data, const std::vector<GbdtParams>& grid, std::size_t k = 5,
                        std::uint64_t seed = 1);

void write_model(std::ostream& out, const Model& model);
/// Throws ParseError on malformed or unsupported input.
Model read_model(std::istream& in);

}  // namespace deferral
