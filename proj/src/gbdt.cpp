#include "deferral/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "deferral/error.hpp"
#include "deferral/metrics.hpp"
#include "deferral/parallel.hpp"

namespace deferral {

namespace {

constexpr int kModelVersion = 1;
constexpr std::size_t kMaxBins = 65535;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Hist {
    std::vector<double> grad, hess;
    std::vector<std::uint32_t> count;
    explicit Hist(std::size_t n) : grad(n, 0.0), hess(n, 0.0), count(n, 0) {}
};

/// Left-to-right scan of a histogram (or of sorted distinct values), shared by both split searches.
template <typename Threshold>
SplitCandidate scan(const Hist& hist, std::size_t bins, double lambda, std::size_t min_samples_leaf,
                    Threshold threshold_of) {
    double g = 0.0, h = 0.0;
    std::size_t n = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        g += hist.grad[b];
        h += hist.hess[b];
        n += hist.count[b];
    }
    SplitCandidate best;
    double gl = 0.0, hl = 0.0;
    std::size_t nl = 0;
    for (std::size_t b = 0; b + 1 < bins; ++b) {
        gl += hist.grad[b];
        hl += hist.hess[b];
        nl += hist.count[b];
        if (hist.count[b] == 0) continue;
        if (nl < min_samples_leaf || n - nl < min_samples_leaf) continue;
        if (nl == n) break;
        const double gain = split_gain(gl, hl, g - gl, h - hl, lambda);
        if (gain > best.gain) {
            best.feature = 0;
            best.gain = gain;
            best.threshold = threshold_of(b);
        }
    }
    return best;
}

/// Fisher-Yates with a fixed generator so fold membership does not depend on the standard library.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

struct NodeWork {
    std::vector<std::uint32_t> rows;
    std::int32_t depth{0};
    double grad{0.0}, hess{0.0};
    SplitCandidate split;
    std::uint16_t split_bin{0};
};

class TreeGrower {
public:
    TreeGrower(const std::vector<std::vector<std::uint16_t>>& binned, const std::vector<FeatureBins>& bins,
               const GbdtParams& params, const std::vector<double>& grad, const std::vector<double>& hess)
        : binned_(binned), bins_(bins), params_(params), grad_(grad), hess_(hess) {}

    /// Grows one tree; leaf_of[r] receives the leaf node index of every row.
    Tree grow(std::vector<std::int32_t>& leaf_of) {
        Tree tree;
        std::vector<NodeWork> work;
        NodeWork root;
        root.rows.resize(grad_.size());
        std::iota(root.rows.begin(), root.rows.end(), 0u);
        finish(root);
        work.push_back(std::move(root));
        tree.nodes.emplace_back();

        std::size_t leaves = 1;
        while (leaves < static_cast<std::size_t>(params_.max_leaves)) {
            std::int32_t pick = -1;
            for (std::size_t i = 0; i < work.size(); ++i) {
                if (tree.nodes[i].feature >= 0 || !work[i].split.valid()) continue;
                if (pick < 0 || work[i].split.gain > work[static_cast<std::size_t>(pick)].split.gain) {
                    pick = static_cast<std::int32_t>(i);
                }
            }
            if (pick < 0) break;
            const auto p = static_cast<std::size_t>(pick);
            NodeWork left, right;
            left.depth = right.depth = work[p].depth + 1;
            const auto& column = binned_[static_cast<std::size_t>(work[p].split.feature)];
            for (auto r : work[p].rows) {
                (column[r] <= work[p].split_bin ? left : right).rows.push_back(r);
            }
            work[p].rows.clear();
            work[p].rows.shrink_to_fit();
            finish(left);
            finish(right);

            auto& node = tree.nodes[p];
            node.feature = work[p].split.feature;
            node.threshold = work[p].split.threshold;
            node.gain = work[p].split.gain;
            node.left = static_cast<std::int32_t>(tree.nodes.size());
            node.right = node.left + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            work.push_back(std::move(left));
            work.push_back(std::move(right));
            ++leaves;
        }

        leaf_of.assign(grad_.size(), 0);
        for (std::size_t i = 0; i < work.size(); ++i) {
            if (tree.nodes[i].feature >= 0) continue;
            tree.nodes[i].value = newton_leaf_value(work[i].grad, work[i].hess, params_.l2_leaf_regularization);
            for (auto r : work[i].rows) leaf_of[r] = static_cast<std::int32_t>(i);
        }
        return tree;
    }

private:
    void finish(NodeWork& node) {
        for (auto r : node.rows) {
            node.grad += grad_[r];
            node.hess += hess_[r];
        }
        if (node.depth >= params_.max_depth) return;
        if (node.rows.size() < 2 * static_cast<std::size_t>(params_.min_samples_leaf)) return;

        const std::size_t features = binned_.size();
        std::vector<SplitCandidate> per_feature(features);
        std::vector<std::uint16_t> per_bin(features, 0);
        parallel_for(features, [&](std::size_t f) {
            const auto& fb = bins_[f];
            const std::size_t nb = fb.num_bins();
            if (nb < 2) return;
            Hist hist(nb);
            const auto& column = binned_[f];
            for (auto r : node.rows) {
                const auto b = column[r];
                hist.grad[b] += grad_[r];
                hist.hess[b] += hess_[r];
                hist.count[b] += 1;
            }
            std::uint16_t chosen = 0;
            auto c = scan(hist, nb, params_.l2_leaf_regularization,
                          static_cast<std::size_t>(params_.min_samples_leaf), [&](std::size_t b) {
                              chosen = static_cast<std::uint16_t>(b);
                              return fb.upper[b];
                          });
            if (c.valid()) {
                c.feature = static_cast<std::int32_t>(f);
                per_feature[f] = c;
                per_bin[f] = chosen;
            }
        });
        for (std::size_t f = 0; f < features; ++f) {
            if (per_feature[f].valid() && per_feature[f].gain > node.split.gain) {
                node.split = per_feature[f];
                node.split_bin = per_bin[f];
            }
        }
    }

    const std::vector<std::vector<std::uint16_t>>& binned_;
    const std::vector<FeatureBins>& bins_;
    const GbdtParams& params_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
};

std::vector<std::size_t> column_map(const Model& model, const std::vector<std::string>& names) {
    std::vector<std::size_t> map;
    for (const auto& f : model.feature_names) {
        const auto it = std::find(names.begin(), names.end(), f);
        if (it == names.end()) throw ValidationError("input lacks model feature \"" + f + "\"");
        map.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    return map;
}

}  // namespace

void GbdtParams::validate() const {
    if (num_trees < 0) throw ConfigError("num_trees must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("learning_rate must be in (0,1]");
    if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
    if (max_leaves < 1) throw ConfigError("max_leaves must be >= 1");
    if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (num_histogram_bins < 2 || static_cast<std::size_t>(num_histogram_bins) > kMaxBins) {
        throw ConfigError("num_histogram_bins must be in [2, 65535]");
    }
    if (!(l2_leaf_regularization >= 0.0)) throw ConfigError("l2_leaf_regularization must be >= 0");
}

double Tree::output(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

std::size_t Tree::num_leaves() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

double Model::margin(std::span<const double> row, std::size_t num_trees) const {
    double m = base_score;
    const std::size_t n = std::min(num_trees, trees.size());
    for (std::size_t t = 0; t < n; ++t) m += learning_rate * trees[t].output(row);
    return m;
}

double newton_leaf_value(double sum_grad, double sum_hess, double lambda) noexcept {
    const double denom = sum_hess + lambda;
    return denom > 0.0 ? -sum_grad / denom : 0.0;
}

double split_gain(double gl, double hl, double gr, double hr, double lambda) noexcept {
    auto score = [lambda](double g, double h) { return h + lambda > 0.0 ? g * g / (h + lambda) : 0.0; };
    return 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr));
}

std::uint16_t FeatureBins::bin_of(double x) const noexcept {
    return static_cast<std::uint16_t>(std::lower_bound(upper.begin(), upper.end(), x) - upper.begin());
}

FeatureBins make_bins(std::span<const double> values, std::size_t max_bins) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    FeatureBins fb;
    if (distinct.size() <= 1) return fb;
    if (distinct.size() <= max_bins) {
        fb.upper.assign(distinct.begin(), distinct.end() - 1);
        return fb;
    }
    for (std::size_t j = 1; j < max_bins; ++j) {
        const double edge = sorted[j * sorted.size() / max_bins];
        if (edge < distinct.back() && (fb.upper.empty() || edge > fb.upper.back())) fb.upper.push_back(edge);
    }
    return fb;
}

SplitCandidate exact_best_split(std::span<const double> values, std::span<const double> grad,
                                std::span<const double> hess, double lambda, std::size_t min_samples_leaf) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    // One histogram cell per distinct value, filled in sorted order.
    std::vector<double> distinct;
    Hist hist(0);
    for (std::size_t i : order) {
        if (distinct.empty() || values[i] != distinct.back()) {
            distinct.push_back(values[i]);
            hist.grad.push_back(0.0);
            hist.hess.push_back(0.0);
            hist.count.push_back(0);
        }
        hist.grad.back() += grad[i];
        hist.hess.back() += hess[i];
        hist.count.back() += 1;
    }
    return scan(hist, distinct.size(), lambda, min_samples_leaf, [&](std::size_t b) { return distinct[b]; });
}

SplitCandidate histogram_best_split(std::span<const double> values, const FeatureBins& bins,
                                    std::span<const double> grad, std::span<const double> hess, double lambda,
                                    std::size_t min_samples_leaf) {
    Hist hist(bins.num_bins());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto b = bins.bin_of(values[i]);
        hist.grad[b] += grad[i];
        hist.hess[b] += hess[i];
        hist.count[b] += 1;
    }
    return scan(hist, bins.num_bins(), lambda, min_samples_leaf, [&](std::size_t b) { return bins.upper[b]; });
}

double weighted_log_loss(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                         std::span<const double> weights) {
    double loss = 0.0, total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(probabilities[i], 1e-15, 1.0 - 1e-15);
        loss -= weights[i] * (labels[i] ? std::log(p) : std::log1p(-p));
        total += weights[i];
    }
    return total > 0.0 ? loss / total : 0.0;
}

Model train(const Dataset& data, const GbdtParams& params, TrainTrace* trace) {
    params.validate();
    data.validate();
    if (data.rows() == 0) throw DataError("empty training set");
    double wpos = 0.0, wneg = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) (data.y[r] ? wpos : wneg) += data.weights[r];
    if (wpos == 0.0 || wneg == 0.0) throw DataError("degenerate labels: training set holds a single class");

    Model model;
    model.params = params;
    model.learning_rate = params.learning_rate;
    model.feature_names = data.feature_names;
    model.base_score = std::log(wpos / wneg);

    const std::size_t n = data.rows(), d = data.cols();
    std::vector<FeatureBins> bins(d);
    std::vector<std::vector<std::uint16_t>> binned(d, std::vector<std::uint16_t>(n));
    parallel_for(d, [&](std::size_t f) {
        std::vector<double> column(n);
        for (std::size_t r = 0; r < n; ++r) column[r] = data.at(r, f);
        bins[f] = make_bins(column, static_cast<std::size_t>(params.num_histogram_bins));
        for (std::size_t r = 0; r < n; ++r) binned[f][r] = bins[f].bin_of(column[r]);
    });

    std::vector<double> margin(n, model.base_score), prob(n), grad(n), hess(n);
    auto refresh = [&] {
        for (std::size_t r = 0; r < n; ++r) {
            prob[r] = sigmoid(margin[r]);
            const double w = data.weights[r];
            grad[r] = w * (prob[r] - data.y[r]);
            hess[r] = w * prob[r] * (1.0 - prob[r]);
        }
    };
    refresh();
    if (trace) trace->loss.assign(1, weighted_log_loss(prob, data.y, data.weights));

    std::vector<std::int32_t> leaf_of;
    for (std::int32_t t = 0; t < params.num_trees; ++t) {
        TreeGrower grower(binned, bins, params, grad, hess);
        Tree tree = grower.grow(leaf_of);
        for (std::size_t r = 0; r < n; ++r) {
            margin[r] += params.learning_rate * tree.nodes[static_cast<std::size_t>(leaf_of[r])].value;
        }
        model.trees.push_back(std::move(tree));
        refresh();
        if (trace) trace->loss.push_back(weighted_log_loss(prob, data.y, data.weights));
    }
    return model;
}

double predict(const Model& model, std::span<const double> row) {
    if (row.size() != model.feature_names.size()) {
        throw ValidationError("feature vector has " + std::to_string(row.size()) + " values, model expects " +
                              std::to_string(model.feature_names.size()));
    }
    return sigmoid(model.margin(row, model.trees.size()));
}

std::vector<double> predict(const Model& model, const Dataset& data, std::size_t num_trees) {
    const auto map = column_map(model, data.feature_names);
    std::vector<double> out(data.rows());
    std::vector<double> row(map.size());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t c = 0; c < map.size(); ++c) row[c] = data.at(r, map[c]);
        out[r] = sigmoid(model.margin(row, num_trees));
    }
    return out;
}

std::vector<double> feature_importance(const Model& model) {
    std::vector<double> imp(model.feature_names.size(), 0.0);
    for (const auto& t : model.trees) {
        for (const auto& n : t.nodes) {
            if (n.feature >= 0) imp[static_cast<std::size_t>(n.feature)] += n.gain;
        }
    }
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0) {
        for (double& v : imp) v /= total;
    }
    return imp;
}

std::vector<GbdtParams> default_param_grid() {
    std::vector<GbdtParams> grid;
    for (int trees : {50, 200}) {
        for (double lr : {0.05, 0.1}) {
            for (int depth : {3, 6}) {
                for (int leaf : {5, 20}) {
                    GbdtParams p;
                    p.num_trees = trees;
                    p.learning_rate = lr;
                    p.max_depth = depth;
                    p.min_samples_leaf = leaf;
                    p.l2_leaf_regularization = 1.0;
                    p.num_histogram_bins = 64;
                    grid.push_back(p);
                }
            }
        }
    }
    return grid;
}

CvResult cross_validate(const Dataset& data, const std::vector<GbdtParams>& grid, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("cross-validation needs k >= 2");
    if (grid.empty()) throw ValidationError("empty parameter grid");
    for (const auto& p : grid) p.validate();
    data.validate();

    std::vector<std::size_t> pos, neg;
    for (std::size_t r = 0; r < data.rows(); ++r) (data.y[r] ? pos : neg).push_back(r);
    if (pos.size() < k) {
        throw ValidationError("cannot stratify: " + std::to_string(pos.size()) + " positives for " +
                              std::to_string(k) + " folds");
    }
    std::mt19937_64 rng(seed);
    shuffle(pos, rng);
    shuffle(neg, rng);
    std::vector<std::size_t> fold_of(data.rows());
    for (std::size_t i = 0; i < pos.size(); ++i) fold_of[pos[i]] = i % k;
    for (std::size_t i = 0; i < neg.size(); ++i) fold_of[neg[i]] = i % k;

    CvResult result;
    result.scores.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) result.scores[g].params = grid[g];

    // Grid points that differ only in num_trees share one boosting run per fold.
    std::map<std::vector<double>, std::vector<std::size_t>> families;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto& p = grid[g];
        families[{p.learning_rate, double(p.max_depth), double(p.max_leaves), double(p.min_samples_leaf),
                  double(p.num_histogram_bins), p.l2_leaf_regularization, double(p.seed)}]
            .push_back(g);
    }
    std::vector<double> f1_sum(grid.size(), 0.0);
    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<std::size_t> train_rows, valid_rows;
        for (std::size_t r = 0; r < data.rows(); ++r) (fold_of[r] == fold ? valid_rows : train_rows).push_back(r);
        const Dataset train_set = data.subset(train_rows);
        const Dataset valid_set = data.subset(valid_rows);
        const auto classes = [](const Dataset& d) {
            const auto pos_count = std::count(d.y.begin(), d.y.end(), std::uint8_t{1});
            return pos_count > 0 && static_cast<std::size_t>(pos_count) < d.rows();
        };
        if (!classes(train_set) || !classes(valid_set)) {
            result.warnings.push_back("fold " + std::to_string(fold) + " holds a single class; skipped");
            continue;
        }
        for (const auto& [key, members] : families) {
            GbdtParams p = grid[members.front()];
            for (auto g : members) p.num_trees = std::max(p.num_trees, grid[g].num_trees);
            const Model model = train(train_set, p);
            for (auto g : members) {
                const auto scores = predict(model, valid_set, static_cast<std::size_t>(grid[g].num_trees));
                std::vector<std::uint8_t> pred(scores.size());
                for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= 0.5;
                f1_sum[g] += metrics(pred, valid_set.y).f1;
                result.scores[g].folds_used += 1;
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto& s = result.scores[g];
        s.mean_f1 = s.folds_used ? f1_sum[g] / static_cast<double>(s.folds_used) : 0.0;
        const auto& b = result.scores[best];
        const bool better = s.mean_f1 > b.mean_f1 ||
                            (s.mean_f1 == b.mean_f1 && (s.params.num_trees < b.params.num_trees ||
                                                        (s.params.num_trees == b.params.num_trees &&
                                                         s.params.max_depth < b.params.max_depth)));
        if (better) best = g;
    }
    if (result.scores[best].folds_used == 0) result.warnings.push_back("no usable fold; first grid point returned");
    result.best = result.scores[best].params;
    return result;
}

void write_model(std::ostream& out, const Model& model) {
    nlohmann::ordered_json j;
    j["format"] = "deferral-gbdt";
    j["version"] = kModelVersion;
    j["base_score"] = model.base_score;
    j["learning_rate"] = model.learning_rate;
    const auto& p = model.params;
    j["params"] = {{"num_trees", p.num_trees},
                   {"learning_rate", p.learning_rate},
                   {"max_depth", p.max_depth},
                   {"max_leaves", p.max_leaves},
                   {"min_samples_leaf", p.min_samples_leaf},
                   {"num_histogram_bins", p.num_histogram_bins},
                   {"l2_leaf_regularization", p.l2_leaf_regularization},
                   {"seed", p.seed}};
    j["feature_names"] = model.feature_names;
    auto trees = nlohmann::ordered_json::array();
    for (const auto& t : model.trees) {
        auto nodes = nlohmann::ordered_json::array();
        for (const auto& n : t.nodes) {
            if (n.feature < 0) {
                nodes.push_back({{"value", n.value}});
            } else {
                nodes.push_back({{"feature", n.feature},
                                 {"threshold", n.threshold},
                                 {"left", n.left},
                                 {"right", n.right},
                                 {"gain", n.gain}});
            }
        }
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    out << j.dump(1) << '\n';
}

Model read_model(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model.json", 1, e.what());
    }
    try {
        if (j.at("format") != "deferral-gbdt") throw ParseError("model.json", 1, "not a model file");
        if (j.at("version").get<int>() != kModelVersion) {
            throw ParseError("model.json", 1, "unsupported model version " + j.at("version").dump());
        }
        Model m;
        m.base_score = j.at("base_score").get<double>();
        m.learning_rate = j.at("learning_rate").get<double>();
        const auto& p = j.at("params");
        m.params.num_trees = p.at("num_trees").get<std::int32_t>();
        m.params.learning_rate = p.at("learning_rate").get<double>();
        m.params.max_depth = p.at("max_depth").get<std::int32_t>();
        m.params.max_leaves = p.at("max_leaves").get<std::int32_t>();
        m.params.min_samples_leaf = p.at("min_samples_leaf").get<std::int32_t>();
        m.params.num_histogram_bins = p.at("num_histogram_bins").get<std::int32_t>();
        m.params.l2_leaf_regularization = p.at("l2_leaf_regularization").get<double>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        for (const auto& jt : j.at("trees")) {
            Tree t;
            for (const auto& jn : jt) {
                TreeNode n;
                if (jn.contains("feature")) {
                    n.feature = jn.at("feature").get<std::int32_t>();
                    n.threshold = jn.at("threshold").get<double>();
                    n.left = jn.at("left").get<std::int32_t>();
                    n.right = jn.at("right").get<std::int32_t>();
                    n.gain = jn.at("gain").get<double>();
                } else {
                    n.value = jn.at("value").get<double>();
                }
                t.nodes.push_back(n);
            }
            const auto size = static_cast<std::int32_t>(t.nodes.size());
            if (size == 0) throw ParseError("model.json", 1, "empty tree");
            for (std::int32_t i = 0; i < size; ++i) {
                const auto& n = t.nodes[static_cast<std::size_t>(i)];
                if (n.feature < 0) continue;
                // Children after their parent rules out cycles.
                if (n.feature >= static_cast<std::int32_t>(m.feature_names.size()) || n.left <= i || n.right <= i ||
                    n.left >= size || n.right >= size) {
                    throw ParseError("model.json", 1, "tree node references out of range");
                }
            }
            m.trees.push_back(std::move(t));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model.json", 1, e.what());
    }
}

}  // namespace deferral
