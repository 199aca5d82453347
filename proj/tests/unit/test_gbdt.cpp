#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deferral/error.hpp"
#include "deferral/gbdt.hpp"
#include "deferral/metrics.hpp"
#include "gbdt_oracles.hpp"

using namespace deferral;
using deferral::testing::oracle_loss;
using deferral::testing::oracle_probability;
using deferral::testing::random_dataset;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double weighted_prior(const Dataset& d) {
    double pos = 0, total = 0;
    for (std::size_t r = 0; r < d.rows(); ++r) {
        pos += d.y[r] * d.weights[r];
        total += d.weights[r];
    }
    return pos / total;
}

// Two features; label is 1 iff x0 + x1 > 1.
Dataset separable(std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset d;
    d.feature_names = {"x0", "x1"};
    for (std::size_t r = 0; r < rows; ++r) {
        const double a = u(rng), b = u(rng);
        d.message_ids.push_back(std::to_string(r));
        d.x.push_back(a);
        d.x.push_back(b);
        d.y.push_back(a + b > 1.0);
        d.weights.push_back(1.0);
    }
    return d;
}

// Only column 3 varies, and it equals the label.
Dataset single_signal(std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    Dataset d;
    d.feature_names = {"a", "b", "c", "signal", "e"};
    for (std::size_t r = 0; r < rows; ++r) {
        const bool y = coin(rng);
        d.message_ids.push_back(std::to_string(r));
        for (int c = 0; c < 5; ++c) d.x.push_back(c == 3 && y ? 1.0 : 0.0);
        d.y.push_back(y);
        d.weights.push_back(1.0);
    }
    return d;
}

Metrics train_metrics(const Model& m, const Dataset& d) {
    const auto p = predict(m, d);
    std::vector<std::uint8_t> pred(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) pred[i] = p[i] >= 0.5;
    return metrics(pred, d.y);
}

}  // namespace

TEST_CASE("newton leaf value and split gain closed forms") {
    CHECK(newton_leaf_value(2.0, 3.0, 1.0) == -0.5);
    CHECK(newton_leaf_value(-1.0, 0.0, 1.0) == 1.0);
    CHECK(split_gain(1.0, 1.0, -1.0, 1.0, 0.0) == doctest::Approx(1.0));
    CHECK(split_gain(3.0, 2.0, 1.0, 2.0, 1.0) ==
          doctest::Approx(0.5 * (9.0 / 3.0 + 1.0 / 3.0 - 16.0 / 5.0)));
}

TEST_CASE("one depth-0 tree predicts the weighted prior") {
    std::mt19937_64 rng(1);
    const Dataset d = random_dataset(rng, 200, 3);
    GbdtParams p;
    p.num_trees = 1;
    p.max_depth = 0;
    const Model m = train(d, p);
    REQUIRE(m.trees.size() == 1);
    CHECK(m.trees[0].num_leaves() == 1);
    const double prior = weighted_prior(d);
    for (std::size_t r = 0; r < d.rows(); ++r) CHECK(predict(m, d.row(r)) == doctest::Approx(prior).epsilon(1e-12));
}

TEST_CASE("leaf values are Newton steps over the rows that reach them") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const Dataset d = random_dataset(rng, 150, 3);
        GbdtParams p;
        p.num_trees = 1;
        p.max_depth = 2;
        p.min_samples_leaf = 5;
        p.l2_leaf_regularization = 0.5 + trial * 0.1;
        const Model m = train(d, p);
        const Tree& tree = m.trees[0];
        const double p0 = sigmoid(m.base_score);
        std::vector<double> g(tree.nodes.size()), h(tree.nodes.size());
        std::vector<bool> reached(tree.nodes.size());
        for (std::size_t r = 0; r < d.rows(); ++r) {
            std::int32_t k = 0;
            while (tree.nodes[k].feature >= 0) k = d.at(r, tree.nodes[k].feature) <= tree.nodes[k].threshold ? tree.nodes[k].left : tree.nodes[k].right;
            g[k] += d.weights[r] * (p0 - d.y[r]);
            h[k] += d.weights[r] * p0 * (1 - p0);
            reached[k] = true;
        }
        for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
            if (tree.nodes[k].feature >= 0 || !reached[k]) continue;
            CHECK(std::abs(tree.nodes[k].value - (-g[k] / (h[k] + p.l2_leaf_regularization))) < 1e-9);
        }
    }
}

TEST_CASE("empty model predicts one half") {
    Model m;
    m.feature_names = {"a", "b"};
    const std::vector<double> row{1.0, 2.0};
    CHECK(predict(m, row) == 0.5);
    const std::vector<double> short_row{1.0};
    CHECK_THROWS_AS(predict(m, short_row), ValidationError);
    CHECK(feature_importance(m) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("prediction agrees with an independent traversal") {
    std::mt19937_64 rng(3);
    const Dataset d = random_dataset(rng, 400, 4, 20);
    GbdtParams p;
    p.num_trees = 30;
    p.max_depth = 4;
    p.min_samples_leaf = 5;
    const Model m = train(d, p);
    for (std::size_t r = 0; r < 100; ++r) {
        CHECK(predict(m, d.row(r)) == oracle_probability(m, d.row(r), m.trees.size()));
    }
}

TEST_CASE("separable data is fit almost perfectly") {
    const Dataset d = separable(600, 4);
    GbdtParams p;
    p.num_trees = 50;
    p.max_depth = 4;
    p.min_samples_leaf = 2;
    p.learning_rate = 0.3;
    const Model m = train(d, p);
    CHECK(train_metrics(m, d).f1 >= 0.99);
}

TEST_CASE("training loss is nonincreasing and matches the trace") {
    std::mt19937_64 rng(5);
    for (double lr : {0.05, 0.1, 0.3}) {
        const Dataset d = random_dataset(rng, 300, 4, 12);
        GbdtParams p;
        p.num_trees = 40;
        p.learning_rate = lr;
        p.max_depth = 3;
        p.min_samples_leaf = 5;
        TrainTrace trace;
        const Model m = train(d, p, &trace);
        REQUIRE(trace.loss.size() == m.trees.size() + 1);
        for (std::size_t k = 0; k <= m.trees.size(); ++k) {
            CHECK(trace.loss[k] == doctest::Approx(oracle_loss(m, d, k)).epsilon(1e-9));
            if (k > 0) CHECK(trace.loss[k] <= trace.loss[k - 1] + 1e-12);
        }
    }
}

TEST_CASE("histogram and exact split gains agree with brute force") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.01, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int distinct = 2 + trial % 40;
        std::uniform_int_distribution<int> v(0, distinct - 1);
        const std::size_t n = 50 + static_cast<std::size_t>(trial);
        std::vector<double> values(n), grad(n), hess(n);
        for (std::size_t i = 0; i < n; ++i) {
            values[i] = v(rng) * 0.5;
            grad[i] = u(rng);
            hess[i] = pos(rng);
        }
        const std::size_t min_leaf = 1 + trial % 5;
        const auto bins = make_bins(values, 64);
        const SplitCandidate exact = exact_best_split(values, grad, hess, 1.0, min_leaf);
        const SplitCandidate hist = histogram_best_split(values, bins, grad, hess, 1.0, min_leaf);
        const double oracle = testing::brute_force_best_gain(values, grad, hess, 1.0, min_leaf);
        CHECK(exact.gain == doctest::Approx(oracle).epsilon(1e-9));
        CHECK(hist.gain == doctest::Approx(exact.gain).epsilon(1e-9));
        if (exact.valid()) CHECK(hist.threshold == exact.threshold);
    }
}

TEST_CASE("bins fall back to quantiles when values outnumber bins") {
    std::vector<double> values(1000);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i);
    const auto bins = make_bins(values, 16);
    CHECK(bins.num_bins() <= 16);
    CHECK(bins.num_bins() >= 8);
    CHECK(std::is_sorted(bins.upper.begin(), bins.upper.end()));
    CHECK(bins.bin_of(-5.0) == 0);
    CHECK(bins.bin_of(1e9) == bins.num_bins() - 1);
    CHECK(make_bins(std::vector<double>(10, 3.0), 16).num_bins() == 1);
}

TEST_CASE("single-class data is rejected") {
    std::mt19937_64 rng(7);
    Dataset d = random_dataset(rng, 50, 2);
    std::fill(d.y.begin(), d.y.end(), 1);
    CHECK_THROWS_WITH_AS(train(d, GbdtParams{}), doctest::Contains("degenerate labels"), DataError);
}

TEST_CASE("importance puts all mass on the only informative feature") {
    const Dataset d = single_signal(300, 8);
    GbdtParams p;
    p.num_trees = 10;
    p.max_depth = 3;
    const Model m = train(d, p);
    const auto imp = feature_importance(m);
    REQUIRE(imp.size() == 5);
    CHECK(imp[3] == doctest::Approx(1.0));
    for (int f : {0, 1, 2, 4}) CHECK(imp[f] == 0.0);
}

TEST_CASE("cross validation picks a useful depth and keeps single-point grids") {
    const Dataset d = separable(500, 9);
    GbdtParams shallow;
    shallow.num_trees = 20;
    shallow.max_depth = 0;
    GbdtParams deep = shallow;
    deep.max_depth = 3;
    deep.min_samples_leaf = 5;
    const CvResult cv = cross_validate(d, {shallow, deep}, 5, 1);
    CHECK(cv.best == deep);
    CHECK(cv.scores.size() == 2);
    CHECK(cross_validate(d, {shallow}, 5, 1).best == shallow);
}

TEST_CASE("cross validation argument checks") {
    Dataset d = separable(100, 10);
    std::fill(d.y.begin(), d.y.end(), 0);
    d.y[0] = d.y[1] = d.y[2] = 1;
    CHECK_THROWS_AS(cross_validate(d, {GbdtParams{}}, 5), ValidationError);
    CHECK_THROWS_AS(cross_validate(d, {GbdtParams{}}, 1), ValidationError);
    CHECK_THROWS_AS(cross_validate(d, {}, 2), ValidationError);
}

TEST_CASE("tied grid points prefer fewer trees") {
    const Dataset d = single_signal(200, 11);
    GbdtParams few;
    few.num_trees = 5;
    few.max_depth = 1;
    few.min_samples_leaf = 5;
    GbdtParams many = few;
    many.num_trees = 50;
    CHECK(cross_validate(d, {many, few}, 4, 1).best == few);
}

TEST_CASE("default grid brackets the documented values") {
    const auto grid = default_param_grid();
    CHECK(grid.size() == 16);
    for (const auto& p : grid) {
        CHECK((p.num_trees == 50 || p.num_trees == 200));
        CHECK((p.learning_rate == 0.05 || p.learning_rate == 0.1));
        CHECK((p.max_depth == 3 || p.max_depth == 6));
        CHECK((p.min_samples_leaf == 5 || p.min_samples_leaf == 20));
        CHECK(p.l2_leaf_regularization == 1.0);
        CHECK(p.num_histogram_bins == 64);
    }
}

TEST_CASE("training is deterministic and models round-trip through JSON") {
    std::mt19937_64 rng(12);
    const Dataset d = random_dataset(rng, 300, 5, 30);
    GbdtParams p;
    p.num_trees = 15;
    p.min_samples_leaf = 5;
    std::ostringstream a, b;
    write_model(a, train(d, p));
    write_model(b, train(d, p));
    CHECK(a.str() == b.str());

    std::istringstream in(a.str());
    const Model back = read_model(in);
    std::ostringstream c;
    write_model(c, back);
    CHECK(c.str() == a.str());
    CHECK(predict(back, d) == predict(train(d, p), d));

    std::istringstream garbage("{\"format\":\"something-else\"}");
    CHECK_THROWS_AS(read_model(garbage), ParseError);
}

TEST_CASE("invalid parameters are rejected") {
    GbdtParams p;
    p.learning_rate = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = GbdtParams{};
    p.l2_leaf_regularization = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}
