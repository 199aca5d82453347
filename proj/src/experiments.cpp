#include "deferral/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "deferral/error.hpp"

namespace deferral {

ExperimentSpec ExperimentSpec::standard(int id, std::uint64_t split_seed) {
    if (id < 1 || id > 3) throw ConfigError("experiment id must be 1, 2 or 3");
    ExperimentSpec s;
    s.id = id;
    s.split_seed = split_seed;
    if (id != 1) s.excluded_columns = {"NumResponse"};
    return s;
}

Cohort build_cohort(const ExperimentSpec& spec, const LabelMap& labels, const Sessions& sessions,
                    const CorpusIndex& index) {
    if (spec.id < 1 || spec.id > 3) throw ConfigError("experiment id must be 1, 2 or 3");
    const auto& actions = index.corpus().actions;
    Cohort cohort;
    for (const auto& [id, label] : labels) {
        if (!label.first_read_session) continue;
        const auto m = index.find_message(id);
        if (!m) continue;
        const std::int32_t read = *label.first_read_session;
        bool strong_at_or_before = false, strong_later = false;
        for (std::size_t i : index.actions_of(*m)) {
            if (!is_strong_action(actions[i].action)) continue;
            (sessions.ordinal_of_action[i] > read ? strong_later : strong_at_or_before) = true;
        }
        const bool any_strong = strong_at_or_before || strong_later;
        bool member = false, positive = false;
        switch (spec.id) {
            case 1: {
                bool strong_in_read = false;
                for (std::size_t i : index.actions_of(*m)) {
                    strong_in_read |= is_strong_action(actions[i].action) && sessions.ordinal_of_action[i] == read;
                }
                member = label.explicit_signal && !strong_in_read;
                positive = strong_later;
                break;
            }
            case 2:
                member = any_strong && label.explicit_signal;
                positive = strong_later && !strong_at_or_before;
                break;
            default:
                member = any_strong;
                positive = strong_later && !strong_at_or_before;
                break;
        }
        if (!member) continue;
        cohort.message_ids.push_back(id);
        cohort.positive.push_back(positive);
        cohort.baseline.push_back(spec.id == 3 ? label.explicit_signal : true);
    }
    if (cohort.message_ids.empty()) {
        throw DataError("Experiment " + std::to_string(spec.id) + ": empty cohort");
    }
    return cohort;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double test_fraction,
                                                                         std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ConfigError("test fraction must be in [0,1]");
    const auto test_n = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (test_n >= n) throw DataError("empty training set");
    if (test_n == 0) throw DataError("empty test set");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_n));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(test_n), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {std::move(train), std::move(test)};
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const LabelMap& labels, const Sessions& sessions,
                                const CorpusIndex& index, const ProfileMap& profiles,
                                const ExperimentOptions& options, Model* model_out, Dataset* data_out) {
    const Cohort cohort = build_cohort(spec, labels, sessions, index);
    const std::string name = "Experiment " + std::to_string(spec.id);
    Dataset data = build_dataset(cohort.message_ids, cohort.positive, labels, sessions, index, profiles,
                                 options.positive_weight)
                       .without_columns(spec.excluded_columns);

    ExperimentResult r;
    r.id = spec.id;
    r.cohort_size = data.rows();
    r.positive_rate = static_cast<double>(std::count(data.y.begin(), data.y.end(), std::uint8_t{1})) /
                      static_cast<double>(data.rows());

    const auto [train_rows, test_rows] = split_rows(data.rows(), spec.test_fraction, spec.split_seed);
    const Dataset train_set = data.subset(train_rows);
    const Dataset test_set = data.subset(test_rows);
    r.train_size = train_set.rows();
    r.test_size = test_set.rows();
    if (std::count(train_set.y.begin(), train_set.y.end(), std::uint8_t{1}) == 0 ||
        std::count(train_set.y.begin(), train_set.y.end(), std::uint8_t{0}) == 0) {
        throw DataError(name + ": degenerate labels in the training set");
    }

    const CvResult cv = cross_validate(train_set, options.grid, options.cv_folds, options.cv_seed);
    r.chosen = cv.best;
    for (const auto& w : cv.warnings) r.warnings.push_back(name + ": " + w);
    Model model = train(train_set, r.chosen);

    const auto scores = predict(model, test_set);
    std::vector<std::uint8_t> pred(scores.size()), base(test_rows.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= 0.5;
    for (std::size_t i = 0; i < test_rows.size(); ++i) base[i] = cohort.baseline[test_rows[i]];
    r.model = metrics(pred, test_set.y);
    r.baseline = metrics(base, test_set.y);

    const auto imp = feature_importance(model);
    std::vector<std::size_t> order(imp.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
    for (std::size_t i = 0; i < std::min<std::size_t>(10, order.size()); ++i) {
        r.top_features.emplace_back(model.feature_names[order[i]], imp[order[i]]);
    }
    if (model_out) *model_out = std::move(model);
    if (data_out) *data_out = std::move(data);
    return r;
}

void write_report_text(std::ostream& out, const EvalReport& report) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::left << std::setw(10) << "";
    for (const auto& e : report.experiments) out << "| " << std::setw(22) << ("Experiment " + std::to_string(e.id));
    out << '\n' << std::setw(10) << "";
    for (std::size_t i = 0; i < report.experiments.size(); ++i) out << "| " << std::setw(7) << "P" << std::setw(7) << "R" << std::setw(8) << "F1";
    out << '\n';
    out << std::fixed << std::setprecision(2);
    for (const char* row : {"Model", "Baseline"}) {
        out << std::setw(10) << row;
        for (const auto& e : report.experiments) {
            const Metrics& m = std::string_view(row) == "Model" ? e.model : e.baseline;
            out << "| " << std::setw(7) << m.precision << std::setw(7) << m.recall << std::setw(8) << m.f1;
        }
        out << '\n';
    }
    out << '\n';
    for (const auto& e : report.experiments) {
        out << "Experiment " << e.id << ": cohort " << e.cohort_size << " (train " << e.train_size << ", test "
            << e.test_size << "), positive rate " << std::setprecision(3) << e.positive_rate << '\n';
        out << "  chosen: trees=" << e.chosen.num_trees << " lr=" << std::setprecision(2) << e.chosen.learning_rate
            << " depth=" << e.chosen.max_depth << " min_leaf=" << e.chosen.min_samples_leaf << '\n';
        out << "  top features:";
        out << std::setprecision(3);
        for (const auto& [f, v] : e.top_features) out << ' ' << f << '=' << v;
        out << '\n';
        for (const auto& w : e.warnings) out << "  warning: " << w << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

namespace {

nlohmann::ordered_json metrics_json(const Metrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
            {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}};
}

Metrics metrics_from(const nlohmann::json& j) {
    Metrics m;
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f1 = j.at("f1").get<double>();
    m.tp = j.at("tp").get<std::size_t>();
    m.fp = j.at("fp").get<std::size_t>();
    m.fn = j.at("fn").get<std::size_t>();
    m.tn = j.at("tn").get<std::size_t>();
    return m;
}

}  // namespace

void write_report_json(std::ostream& out, const EvalReport& report) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : report.experiments) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["cohort_size"] = e.cohort_size;
        j["train_size"] = e.train_size;
        j["test_size"] = e.test_size;
        j["positive_rate"] = e.positive_rate;
        j["model"] = metrics_json(e.model);
        j["baseline"] = metrics_json(e.baseline);
        j["chosen"] = {{"num_trees", e.chosen.num_trees},
                       {"learning_rate", e.chosen.learning_rate},
                       {"max_depth", e.chosen.max_depth},
                       {"max_leaves", e.chosen.max_leaves},
                       {"min_samples_leaf", e.chosen.min_samples_leaf},
                       {"num_histogram_bins", e.chosen.num_histogram_bins},
                       {"l2_leaf_regularization", e.chosen.l2_leaf_regularization}};
        auto top = nlohmann::ordered_json::array();
        for (const auto& [f, v] : e.top_features) top.push_back({{"feature", f}, {"importance", v}});
        j["top_features"] = std::move(top);
        j["warnings"] = e.warnings;
        arr.push_back(std::move(j));
    }
    nlohmann::ordered_json root;
    root["experiments"] = std::move(arr);
    out << root.dump(2) << '\n';
}

EvalReport read_report_json(std::istream& in) {
    EvalReport report;
    try {
        nlohmann::json root;
        in >> root;
        for (const auto& j : root.at("experiments")) {
            ExperimentResult e;
            e.id = j.at("id").get<int>();
            e.cohort_size = j.at("cohort_size").get<std::size_t>();
            e.train_size = j.at("train_size").get<std::size_t>();
            e.test_size = j.at("test_size").get<std::size_t>();
            e.positive_rate = j.at("positive_rate").get<double>();
            e.model = metrics_from(j.at("model"));
            e.baseline = metrics_from(j.at("baseline"));
            const auto& c = j.at("chosen");
            e.chosen.num_trees = c.at("num_trees").get<std::int32_t>();
            e.chosen.learning_rate = c.at("learning_rate").get<double>();
            e.chosen.max_depth = c.at("max_depth").get<std::int32_t>();
            e.chosen.max_leaves = c.at("max_leaves").get<std::int32_t>();
            e.chosen.min_samples_leaf = c.at("min_samples_leaf").get<std::int32_t>();
            e.chosen.num_histogram_bins = c.at("num_histogram_bins").get<std::int32_t>();
            e.chosen.l2_leaf_regularization = c.at("l2_leaf_regularization").get<double>();
            for (const auto& t : j.at("top_features")) {
                e.top_features.emplace_back(t.at("feature").get<std::string>(), t.at("importance").get<double>());
            }
            e.warnings = j.at("warnings").get<std::vector<std::string>>();
            report.experiments.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("report.json", 1, e.what());
    }
    return report;
}

}  // namespace deferral
