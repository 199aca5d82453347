#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"

#include "deferral/characterizer.hpp"
#include "deferral/csv.hpp"
#include "deferral/error.hpp"
#include "deferral/experiments.hpp"
#include "deferral/featurizer.hpp"
#include "deferral/gbdt.hpp"
#include "deferral/labeler.hpp"
#include "deferral/log_model.hpp"
#include "deferral/sessionizer.hpp"
#include "deferral/synthgen.hpp"

namespace fs = std::filesystem;
using namespace deferral;

namespace {

struct StageError : std::runtime_error {
    StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
    std::string stage;
};

struct Options {
    std::uint64_t seed{1};
    Timestamp gap_secs{kDefaultGapSecs};
    double positive_weight{10.0};
    std::string signal_window{"read-session"};
    double min_active_ratio{0.01};
    std::string out;

    std::int64_t users{500};
    std::int64_t days{10};
    std::string profile{"calibrated"};
    std::string config_file;

    std::string corpus, sessions, labels, data, model, features, stats, eval;
    int experiment{1};
    std::size_t resamples{1000};
    std::size_t folds{5};
    std::string grid{"default"};
};

std::ifstream open_in(const fs::path& p, const char* what) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(std::string("missing input ") + what + ": " + p.string());
    return in;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    return out;
}

fs::path require_out(const Options& o) {
    if (o.out.empty()) throw Error("--out is required");
    fs::create_directories(o.out);
    return o.out;
}

/// Corpus after the active-user filter; every stage applies the same rule.
Corpus load_filtered(const Options& o) {
    if (o.corpus.empty()) throw Error("--corpus is required");
    if (!fs::is_directory(o.corpus)) throw Error("missing input corpus directory: " + o.corpus);
    return filter_active_users(load_corpus(o.corpus), o.min_active_ratio);
}

Sessions load_sessions(const Options& o, const Corpus& corpus) {
    if (o.sessions.empty()) throw Error("--sessions is required");
    auto in = open_in(o.sessions, "sessions");
    return read_sessions(in, corpus);
}

LabelMap load_labels(const Options& o) {
    if (o.labels.empty()) throw Error("--labels is required");
    auto in = open_in(o.labels, "labels");
    return read_labels(in);
}

std::vector<GbdtParams> grid_for(const Options& o) {
    if (o.grid == "default") return default_param_grid();
    if (o.grid == "small") {
        GbdtParams p;
        p.num_trees = 50;
        p.learning_rate = 0.1;
        p.max_depth = 3;
        p.min_samples_leaf = 20;
        return {p};
    }
    throw Error("unknown grid \"" + o.grid + "\"");
}

// ----- stages ----------------------------------------------------------------

void run_generate(const Options& o) {
    const fs::path out = require_out(o);
    SynthConfig cfg;
    if (o.profile == "calibrated") {
        cfg = calibrated_config();
    } else if (o.profile == "planted") {
        cfg = planted_signal_config();
    } else {
        throw ConfigError("unknown profile \"" + o.profile + "\"");
    }
    cfg.num_users = o.users;
    cfg.days = o.days;
    cfg.seed = o.seed;
    if (!o.config_file.empty()) {
        auto in = open_in(o.config_file, "config");
        cfg = read_config(in, cfg);
    }
    const SynthResult r = generate(cfg);
    save_synth(out, r);
    auto cfg_out = open_out(out / "synth_config.txt");
    write_config(cfg_out, cfg);
    std::cout << "generate: " << r.corpus.users().size() << " users, " << r.corpus.messages.size() << " messages, "
              << r.corpus.actions.size() << " actions -> " << out.string() << '\n';
}

void run_sessionize(const Options& o) {
    const fs::path out = require_out(o);
    if (o.corpus.empty()) throw Error("--corpus is required");
    if (!fs::is_directory(o.corpus)) throw Error("missing input corpus directory: " + o.corpus);
    FilterReport report;
    const Corpus corpus = filter_active_users(load_corpus(o.corpus), o.min_active_ratio, &report);
    const Sessions s = sessionize(corpus, o.gap_secs);
    auto f = open_out(out / "sessions.jsonl");
    write_sessions(f, s);
    std::cout << "sessionize: " << s.total() << " sessions over " << s.by_user.size() << " users ("
              << report.dropped_below_ratio.size() + report.dropped_no_deliveries.size() << " users filtered)\n";
}

void run_label(const Options& o) {
    const fs::path out = require_out(o);
    const Corpus corpus = load_filtered(o);
    const Sessions s = load_sessions(o, corpus);
    const CorpusIndex index(corpus);
    LabelOptions lo;
    lo.signal_window = parse_signal_window(o.signal_window);
    LabelAnomalies anomalies;
    const LabelMap labels = label_corpus(index, s, lo, &anomalies);
    auto f = open_out(out / "labels.jsonl");
    write_labels(f, labels);
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& [id, l] : labels) ++counts[static_cast<int>(l.label)];
    std::cout << "label: " << counts[0] << " Deferred, " << counts[1] << " NonDeferred, " << counts[2]
              << " NeverRead; anomalies: " << anomalies.strong_before_read << " strong-before-read, "
              << anomalies.strong_without_read << " strong-without-read\n";
}

void run_characterize(const Options& o) {
    const fs::path out = require_out(o);
    const Corpus corpus = load_filtered(o);
    const Sessions s = load_sessions(o, corpus);
    const LabelMap labels = load_labels(o);
    const CorpusIndex index(corpus);
    CharacterizeOptions co;
    co.seed = o.seed;
    co.num_resamples = o.resamples;
    const auto tables = characterize(labels, s, index, co);
    for (const auto& t : tables) {
        auto f = open_out(out / (t.name + ".csv"));
        write_table_csv(f, t);
        if (t.name.rfind("workload_", 0) == 0) {
            auto d = open_out(out / (t.name + ".dat"));
            write_workload_dat(d, t);
        }
    }
    const auto* frac = tables.front().find("all", "deferred_message_fraction");
    std::cout << "characterize: " << tables.size() << " tables; deferred message fraction "
              << (frac ? csv::format_double(frac->value) : std::string("n/a")) << '\n';
}

void run_featurize(const Options& o) {
    const fs::path out = require_out(o);
    const Corpus corpus = load_filtered(o);
    const Sessions s = load_sessions(o, corpus);
    const LabelMap labels = load_labels(o);
    const CorpusIndex index(corpus);
    const ProfileMap profiles = infer_profiles(index);
    const auto spec = ExperimentSpec::standard(o.experiment, o.seed);
    const Cohort cohort = build_cohort(spec, labels, s, index);
    const Dataset data =
        build_dataset(cohort.message_ids, cohort.positive, labels, s, index, profiles, o.positive_weight)
            .without_columns(spec.excluded_columns);
    const auto [train_rows, test_rows] = split_rows(data.rows(), spec.test_fraction, spec.split_seed);

    auto ff = open_out(out / "features.csv");
    write_features_csv(ff, data);
    auto lf = open_out(out / "labels.csv");
    write_labels_csv(lf, data);
    auto wf = open_out(out / "weights.csv");
    write_weights_csv(wf, data);
    auto sf = open_out(out / "split.csv");
    csv::write_row(sf, {"message_id", "set", "baseline"});
    std::vector<const char*> set(data.rows(), "train");
    for (auto r : test_rows) set[r] = "test";
    for (std::size_t r = 0; r < data.rows(); ++r) {
        csv::write_row(sf, {data.message_ids[r], set[r], cohort.baseline[r] ? "1" : "0"});
    }
    std::cout << "featurize: experiment " << o.experiment << ", " << data.rows() << " rows x " << data.cols()
              << " columns (" << train_rows.size() << " train, " << test_rows.size() << " test)\n";
}

struct Split {
    std::vector<std::size_t> train, test;
    std::vector<std::uint8_t> baseline;  ///< per test row, in test order
};

Split read_split(const fs::path& p, const Dataset& data) {
    auto in = open_in(p, "split");
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::pair<bool, bool>> rows;  // id -> (is_test, baseline)
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = csv::split_line(line);
        if (f.size() != 3 || (f[1] != "train" && f[1] != "test")) throw ParseError("split.csv", lineno, "bad row");
        rows[f[0]] = {f[1] == "test", f[2] == "1"};
    }
    Split s;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto it = rows.find(data.message_ids[r]);
        if (it == rows.end()) throw IntegrityError("split.csv lacks message " + data.message_ids[r]);
        if (it->second.first) {
            s.test.push_back(r);
            s.baseline.push_back(it->second.second);
        } else {
            s.train.push_back(r);
        }
    }
    return s;
}

Dataset read_data_dir(const fs::path& dir) {
    auto f = open_in(dir / "features.csv", "features");
    auto l = open_in(dir / "labels.csv", "labels");
    auto w = open_in(dir / "weights.csv", "weights");
    return read_dataset(f, l, w);
}

void run_train(const Options& o) {
    const fs::path out = require_out(o);
    if (o.data.empty()) throw Error("--data is required");
    const Dataset data = read_data_dir(o.data);
    const Split split = read_split(fs::path(o.data) / "split.csv", data);
    const Dataset train_set = data.subset(split.train);
    const CvResult cv = cross_validate(train_set, grid_for(o), o.folds, o.seed);
    const Model model = train(train_set, cv.best);
    auto mf = open_out(out / "model.json");
    write_model(mf, model);

    nlohmann::ordered_json j;
    auto scores = nlohmann::ordered_json::array();
    for (const auto& s : cv.scores) {
        scores.push_back({{"num_trees", s.params.num_trees},
                          {"learning_rate", s.params.learning_rate},
                          {"max_depth", s.params.max_depth},
                          {"min_samples_leaf", s.params.min_samples_leaf},
                          {"mean_f1", s.mean_f1},
                          {"folds_used", s.folds_used}});
    }
    j["scores"] = std::move(scores);
    j["warnings"] = cv.warnings;
    auto cf = open_out(out / "cv.json");
    cf << j.dump(2) << '\n';
    std::cout << "train: " << train_set.rows() << " rows, chosen trees=" << cv.best.num_trees
              << " lr=" << cv.best.learning_rate << " depth=" << cv.best.max_depth
              << " min_leaf=" << cv.best.min_samples_leaf << '\n';
}

void run_predict(const Options& o) {
    const fs::path out = require_out(o);
    if (o.model.empty() || o.features.empty()) throw Error("--model and --features are required");
    auto mf = open_in(o.model, "model");
    const Model model = read_model(mf);
    auto ff = open_in(o.features, "features");
    const Dataset data = read_features_csv(ff);
    const auto scores = predict(model, data);
    auto sf = open_out(out / "scores.csv");
    csv::write_row(sf, {"message_id", "score"});
    for (std::size_t r = 0; r < data.rows(); ++r) csv::write_row(sf, {data.message_ids[r], csv::format_double(scores[r])});
    std::cout << "predict: " << data.rows() << " rows scored\n";
}

/// Scores each experiment directory (featurize + train outputs) on its held-out rows.
void run_evaluate(const Options& o) {
    const fs::path out = require_out(o);
    if (o.data.empty()) throw Error("--data is required");
    EvalReport report;
    for (int id = 1; id <= 3; ++id) {
        const fs::path dir = fs::path(o.data) / ("exp" + std::to_string(id));
        if (!fs::exists(dir / "model.json")) continue;
        const Dataset data = read_data_dir(dir);
        const Split split = read_split(dir / "split.csv", data);
        auto mf = open_in(dir / "model.json", "model");
        const Model model = read_model(mf);
        const Dataset test_set = data.subset(split.test);

        ExperimentResult r;
        r.id = id;
        r.cohort_size = data.rows();
        r.train_size = split.train.size();
        r.test_size = split.test.size();
        r.positive_rate = static_cast<double>(std::count(data.y.begin(), data.y.end(), std::uint8_t{1})) /
                          static_cast<double>(data.rows());
        const auto scores = predict(model, test_set);
        std::vector<std::uint8_t> pred(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= 0.5;
        r.model = metrics(pred, test_set.y);
        r.baseline = metrics(split.baseline, test_set.y);
        r.chosen = model.params;
        const auto imp = feature_importance(model);
        std::vector<std::size_t> order(imp.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
        for (std::size_t i = 0; i < std::min<std::size_t>(10, order.size()); ++i) {
            r.top_features.emplace_back(model.feature_names[order[i]], imp[order[i]]);
        }
        if (fs::exists(dir / "cv.json")) {
            auto cf = open_in(dir / "cv.json", "cv");
            const auto cj = nlohmann::json::parse(cf);
            for (const auto& w : cj.at("warnings")) r.warnings.push_back("Experiment " + std::to_string(id) + ": " + w.get<std::string>());
        }
        report.experiments.push_back(std::move(r));
    }
    if (report.experiments.empty()) throw Error("no experiment directories with model.json under " + o.data);
    auto jf = open_out(out / "report.json");
    write_report_json(jf, report);
    auto tf = open_out(out / "report.txt");
    write_report_text(tf, report);
    write_report_text(std::cout, report);
}

void run_report(const Options& o) {
    const fs::path out = require_out(o);
    if (o.stats.empty() || o.eval.empty()) throw Error("--stats and --eval are required");
    auto tf = open_out(out / "report.txt");
    for (const char* name : {"headline", "properties", "actions", "actions_by_session", "replied", "workload_unhandled",
                             "workload_meetings"}) {
        auto in = open_in(fs::path(o.stats) / (std::string(name) + ".csv"), "stats table");
        write_table_text(tf, read_table_csv(in, name));
        tf << '\n';
    }
    auto jf = open_in(fs::path(o.eval) / "report.json", "evaluation report");
    write_report_text(tf, read_report_json(jf));
    std::cout << "report: " << (out / "report.txt").string() << '\n';
}

void run_pipeline(Options o) {
    const fs::path root = require_out(o);
    auto stage = [](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    };
    Options g = o;
    g.out = (root / "corpus").string();
    stage("generate", [&] { run_generate(g); });

    o.corpus = (root / "corpus").string();
    o.sessions = (root / "sessions.jsonl").string();
    o.labels = (root / "labels.jsonl").string();
    Options s = o;
    s.out = root.string();
    stage("sessionize", [&] { run_sessionize(s); });
    stage("label", [&] { run_label(s); });
    Options c = o;
    c.out = (root / "stats").string();
    stage("characterize", [&] { run_characterize(c); });
    for (int id = 1; id <= 3; ++id) {
        Options e = o;
        e.experiment = id;
        e.out = (root / ("exp" + std::to_string(id))).string();
        e.data = e.out;
        const std::string name = "experiment " + std::to_string(id);
        try {
            run_featurize(e);
            run_train(e);
            e.model = (fs::path(e.out) / "model.json").string();
            e.features = (fs::path(e.out) / "features.csv").string();
            run_predict(e);
        } catch (const DataError& err) {
            // A cohort too small to learn from is reported, not fatal.
            std::cout << "pipeline: skipping " << name << ": " << err.what() << '\n';
            fs::remove(fs::path(e.out) / "model.json");
        } catch (const ValidationError& err) {
            std::cout << "pipeline: skipping " << name << ": " << err.what() << '\n';
            fs::remove(fs::path(e.out) / "model.json");
        } catch (const std::exception& err) {
            throw StageError(name, err.what());
        }
    }
    Options v = o;
    v.data = root.string();
    v.out = (root / "eval").string();
    stage("evaluate", [&] { run_evaluate(v); });
    Options r = o;
    r.stats = (root / "stats").string();
    r.eval = (root / "eval").string();
    r.out = root.string();
    stage("report", [&] { run_report(r); });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Email deferral analysis pipeline"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--gap-secs", o.gap_secs, "session inactivity threshold in seconds")->check(CLI::PositiveNumber);
        sub->add_option("--positive-weight", o.positive_weight, "training weight of positive examples")
            ->check(CLI::PositiveNumber);
        sub->add_option("--signal-window", o.signal_window, "where Flag/MarkAsUnread count as explicit signals")
            ->check(CLI::IsMember({"read-session", "pre-strong"}));
        sub->add_option("--min-active-ratio", o.min_active_ratio, "minimum acted-on/delivered ratio per user");
        sub->add_option("--out", o.out, "output directory");
    };
    auto inputs = [&](CLI::App* sub, bool sessions, bool labels) {
        sub->add_option("--corpus", o.corpus, "corpus directory (actions/messages/calendar jsonl)");
        if (sessions) sub->add_option("--sessions", o.sessions, "sessions.jsonl");
        if (labels) sub->add_option("--labels", o.labels, "labels.jsonl");
    };
    auto synth = [&](CLI::App* sub) {
        sub->add_option("--users", o.users, "number of users")->check(CLI::PositiveNumber);
        sub->add_option("--days", o.days, "days in the log window")->check(CLI::PositiveNumber);
        sub->add_option("--profile", o.profile, "generator profile")->check(CLI::IsMember({"calibrated", "planted"}));
        sub->add_option("--config", o.config_file, "key = value overrides for the generator");
    };
    auto training = [&](CLI::App* sub) {
        sub->add_option("--folds", o.folds, "cross-validation folds")->check(CLI::Range(2, 100));
        sub->add_option("--grid", o.grid, "hyperparameter grid")->check(CLI::IsMember({"default", "small"}));
    };

    auto* gen = app.add_subcommand("generate", "write a synthetic corpus with ground truth");
    common(gen);
    synth(gen);
    auto* ses = app.add_subcommand("sessionize", "split each user's actions into sessions");
    common(ses);
    inputs(ses, false, false);
    auto* lab = app.add_subcommand("label", "label messages Deferred / NonDeferred / NeverRead");
    common(lab);
    inputs(lab, true, false);
    auto* cha = app.add_subcommand("characterize", "descriptive statistics with bootstrap intervals");
    common(cha);
    inputs(cha, true, true);
    cha->add_option("--resamples", o.resamples, "bootstrap resamples")->check(CLI::Range(100, 1000000));
    auto* fea = app.add_subcommand("featurize", "feature matrix for one experiment cohort");
    common(fea);
    inputs(fea, true, true);
    fea->add_option("--experiment", o.experiment, "experiment id")->check(CLI::Range(1, 3));
    auto* tra = app.add_subcommand("train", "cross-validate and fit a model on the training rows");
    common(tra);
    training(tra);
    tra->add_option("--data", o.data, "directory written by featurize");
    auto* pre = app.add_subcommand("predict", "score a features.csv with a model");
    common(pre);
    pre->add_option("--model", o.model, "model.json");
    pre->add_option("--features", o.features, "features.csv");
    auto* eva = app.add_subcommand("evaluate", "test-set metrics for model and baseline");
    common(eva);
    eva->add_option("--data", o.data, "directory holding exp1..exp3");
    auto* rep = app.add_subcommand("report", "assemble the text report");
    common(rep);
    rep->add_option("--stats", o.stats, "characterize output directory");
    rep->add_option("--eval", o.eval, "evaluate output directory");
    auto* pip = app.add_subcommand("pipeline", "run every stage on a synthetic corpus");
    common(pip);
    synth(pip);
    training(pip);
    pip->add_option("--resamples", o.resamples, "bootstrap resamples")->check(CLI::Range(100, 1000000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::vector<std::pair<CLI::App*, void (*)(const Options&)>> stages = {
        {gen, run_generate}, {ses, run_sessionize}, {lab, run_label},   {cha, run_characterize},
        {fea, run_featurize}, {tra, run_train},     {pre, run_predict}, {eva, run_evaluate},
        {rep, run_report},
    };
    try {
        if (pip->parsed()) {
            run_pipeline(o);
            return 0;
        }
        for (const auto& [sub, fn] : stages) {
            if (!sub->parsed()) continue;
            try {
                fn(o);
            } catch (const std::exception& e) {
                throw StageError(sub->get_name(), e.what());
            }
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.stage << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
