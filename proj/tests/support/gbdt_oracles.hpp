#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deferral/featurizer.hpp"
#include "deferral/gbdt.hpp"

namespace deferral::testing {

/// Random weighted dataset whose features take few distinct integer values.
inline Dataset random_dataset(std::mt19937_64& rng, std::size_t rows, std::size_t cols, int distinct = 8) {
    Dataset d;
    for (std::size_t c = 0; c < cols; ++c) d.feature_names.push_back("f" + std::to_string(c));
    std::uniform_int_distribution<int> value(0, distinct - 1);
    std::uniform_real_distribution<double> weight(0.1, 10.0);
    std::bernoulli_distribution coin(0.3);
    for (std::size_t r = 0; r < rows; ++r) {
        d.message_ids.push_back("r" + std::to_string(r));
        for (std::size_t c = 0; c < cols; ++c) d.x.push_back(value(rng));
        d.y.push_back(coin(rng));
        d.weights.push_back(weight(rng));
    }
    d.y[0] = 1;
    d.y[1] = 0;
    return d;
}

/// Plain recursive traversal, written against the node layout only.
inline double traverse(const Tree& tree, std::span<const double> row) {
    std::int32_t k = 0;
    while (tree.nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(k)];
        k = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return tree.nodes[static_cast<std::size_t>(k)].value;
}

inline double oracle_probability(const Model& model, std::span<const double> row, std::size_t num_trees) {
    double margin = model.base_score;
    for (std::size_t t = 0; t < std::min(num_trees, model.trees.size()); ++t) {
        margin += model.learning_rate * traverse(model.trees[t], row);
    }
    return 1.0 / (1.0 + std::exp(-margin));
}

inline double oracle_loss(const Model& model, const Dataset& d, std::size_t num_trees) {
    double loss = 0.0, total = 0.0;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        const double p = oracle_probability(model, d.row(r), num_trees);
        loss -= d.weights[r] * (d.y[r] ? std::log(p) : std::log(1.0 - p));
        total += d.weights[r];
    }
    return loss / total;
}

/// Best gain over every threshold between distinct values, by direct summation.
inline double brute_force_best_gain(std::span<const double> values, std::span<const double> grad,
                                    std::span<const double> hess, double lambda, std::size_t min_leaf) {
    const std::set<double> distinct(values.begin(), values.end());
    double g = 0, h = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        g += grad[i];
        h += hess[i];
    }
    double best = 0.0;
    for (double t : distinct) {
        double gl = 0, hl = 0;
        std::size_t nl = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] <= t) {
                gl += grad[i];
                hl += hess[i];
                ++nl;
            }
        }
        if (nl < min_leaf || values.size() - nl < min_leaf || nl == values.size()) continue;
        const double gr = g - gl, hr = h - hl;
        const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda));
        best = std::max(best, gain);
    }
    return best;
}

}  // namespace deferral::testing
