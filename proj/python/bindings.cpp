#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "deferral/characterizer.hpp"
#include "deferral/error.hpp"
#include "deferral/experiments.hpp"
#include "deferral/gbdt.hpp"
#include "deferral/labeler.hpp"
#include "deferral/metrics.hpp"
#include "deferral/sessionizer.hpp"
#include "deferral/synthgen.hpp"

namespace py = pybind11;
using namespace deferral;

namespace {

py::dict metrics_dict(const Metrics& m) {
    py::dict d;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["f1"] = m.f1;
    d["tp"] = m.tp;
    d["fp"] = m.fp;
    d["fn"] = m.fn;
    d["tn"] = m.tn;
    return d;
}

/// Corpus plus everything derived from it up to the labels. The index points into `corpus`.
class Analysis {
public:
    Analysis(Corpus corpus, Timestamp gap, const std::string& signal_window)
        : corpus_(std::make_unique<Corpus>(std::move(corpus))), index_(*corpus_), sessions_(sessionize(*corpus_, gap)) {
        LabelOptions opts;
        opts.signal_window = parse_signal_window(signal_window);
        labels_ = label_corpus(index_, sessions_, opts);
    }

    std::size_t num_sessions() const { return sessions_.total(); }

    std::map<std::string, std::string> labels() const {
        std::map<std::string, std::string> out;
        for (const auto& [id, l] : labels_) out.emplace(id, std::string(to_string(l.label)));
        return out;
    }

    std::map<std::string, std::size_t> label_counts() const {
        std::map<std::string, std::size_t> out{{"Deferred", 0}, {"NonDeferred", 0}, {"NeverRead", 0}};
        for (const auto& [id, l] : labels_) ++out[std::string(to_string(l.label))];
        return out;
    }

    py::list characterize(std::size_t resamples, std::uint64_t seed) const {
        CharacterizeOptions opts;
        opts.num_resamples = resamples;
        opts.seed = seed;
        py::list rows;
        for (const StatTable& t : deferral::characterize(labels_, sessions_, index_, opts)) {
            for (const StatRow& r : t.rows) {
                py::dict d;
                d["table"] = t.name;
                d["group"] = r.group;
                d["statistic"] = r.statistic;
                d["value"] = r.value;
                d["ci_low"] = r.ci_low;
                d["ci_high"] = r.ci_high;
                d["n"] = r.n;
                rows.append(d);
            }
        }
        return rows;
    }

    py::dict run_experiment(int id, std::uint64_t seed, bool small_grid) const {
        ExperimentOptions opts;
        if (small_grid) {
            GbdtParams p;
            p.num_trees = 50;
            p.max_depth = 4;
            p.min_samples_leaf = 10;
            opts.grid = {p};
            opts.cv_folds = 3;
        }
        const ExperimentResult e = deferral::run_experiment(ExperimentSpec::standard(id, seed), labels_, sessions_,
                                                            index_, infer_profiles(index_), opts);
        py::dict d;
        d["id"] = e.id;
        d["cohort_size"] = e.cohort_size;
        d["train_size"] = e.train_size;
        d["test_size"] = e.test_size;
        d["positive_rate"] = e.positive_rate;
        d["model"] = metrics_dict(e.model);
        d["baseline"] = metrics_dict(e.baseline);
        d["top_features"] = e.top_features;
        d["warnings"] = e.warnings;
        return d;
    }

private:
    std::unique_ptr<Corpus> corpus_;
    CorpusIndex index_;
    Sessions sessions_;
    LabelMap labels_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Email deferral pipeline: synthetic logs, sessions, labels, statistics and experiments.";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<LookupError>(m, "LookupError", base.ptr());

    py::class_<SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("num_users", &SynthConfig::num_users)
        .def_readwrite("days", &SynthConfig::days)
        .def_readwrite("seed", &SynthConfig::seed)
        .def_readwrite("arrivals_per_user_day", &SynthConfig::arrivals_per_user_day)
        .def_readwrite("base_defer_prob", &SynthConfig::base_defer_prob)
        .def_readwrite("completion_prob", &SynthConfig::completion_prob)
        .def_readwrite("reply_prob", &SynthConfig::reply_prob)
        .def_readwrite("workload_slope", &SynthConfig::workload_slope)
        .def_readwrite("meeting_slope", &SynthConfig::meeting_slope)
        .def_readwrite("body_length_slope", &SynthConfig::body_length_slope)
        .def("validate", &SynthConfig::validate);

    m.def("calibrated_config", [] { return calibrated_config(); });
    m.def("planted_signal_config", &planted_signal_config);

    py::class_<Corpus>(m, "Corpus")
        .def_property_readonly("num_messages", [](const Corpus& c) { return c.messages.size(); })
        .def_property_readonly("num_actions", [](const Corpus& c) { return c.actions.size(); })
        .def_property_readonly("num_calendar_slots", [](const Corpus& c) { return c.calendar.size(); })
        .def("users", &Corpus::users)
        .def("save", [](const Corpus& c, const std::filesystem::path& dir) { save_corpus(dir, c); }, py::arg("dir"));

    m.def("load_corpus", &load_corpus, py::arg("dir"));

    py::class_<SynthResult>(m, "SynthResult")
        .def_readonly("corpus", &SynthResult::corpus)
        .def("intents", [](const SynthResult& r) {
            std::map<std::string, std::string> out;
            for (const auto& [id, t] : r.truth) out.emplace(id, t.intent == Intent::Deferred ? "Deferred" : "NonDeferred");
            return out;
        });

    m.def("generate", &generate, py::arg("config"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "check_calibration",
        [](const SynthResult& r, std::size_t resamples) {
            CalibrationCheckOptions opts;
            opts.num_resamples = resamples;
            const CalibrationReport rep = check_calibration(r.corpus, r.truth, published_targets(), opts);
            py::list out;
            for (const auto& e : rep.entries) {
                py::dict d;
                d["table"] = e.target.table;
                d["group"] = e.target.group;
                d["statistic"] = e.target.statistic;
                d["target"] = e.target.value;
                d["measured"] = e.measured;
                d["ci_low"] = e.ci_low;
                d["ci_high"] = e.ci_high;
                d["status"] = std::string(to_string(e.status));
                out.append(d);
            }
            return out;
        },
        py::arg("result"), py::arg("resamples") = 1000);

    py::class_<Analysis>(m, "Analysis")
        .def(py::init<Corpus, Timestamp, const std::string&>(), py::arg("corpus"), py::arg("gap") = kDefaultGapSecs,
             py::arg("signal_window") = "read-session")
        .def_property_readonly("num_sessions", &Analysis::num_sessions)
        .def("labels", &Analysis::labels)
        .def("label_counts", &Analysis::label_counts)
        .def("characterize", &Analysis::characterize, py::arg("resamples") = 1000, py::arg("seed") = 1)
        .def("run_experiment", &Analysis::run_experiment, py::arg("id"), py::arg("seed") = 1,
             py::arg("small_grid") = false);

    m.def(
        "metrics",
        [](const std::vector<std::uint8_t>& predictions, const std::vector<std::uint8_t>& labels) {
            return metrics_dict(metrics(predictions, labels));
        },
        py::arg("predictions"), py::arg("labels"));
    m.def("newton_leaf_value", &newton_leaf_value, py::arg("sum_grad"), py::arg("sum_hess"), py::arg("l2"));
    m.def("split_gain", &split_gain, py::arg("gl"), py::arg("hl"), py::arg("gr"), py::arg("hr"), py::arg("l2"));
}
