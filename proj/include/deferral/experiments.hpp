#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "deferral/featurizer.hpp"
#include "deferral/gbdt.hpp"
#include "deferral/labeler.hpp"
#include "deferral/metrics.hpp"

namespace deferral {

struct ExperimentSpec {
    int id{1};  ///< 1, 2 or 3
    std::vector<std::string> excluded_columns;
    std::uint64_t split_seed{1};
    double test_fraction{0.2};

    /// The standard rules for experiment `id`. Throws ConfigError for other ids.
    static ExperimentSpec standard(int id, std::uint64_t split_seed = 1);
};

struct Cohort {
    std::vector<std::string> message_ids;  ///< ascending id order
    std::vector<bool> positive;
    std::vector<bool> baseline;  ///< the baseline's prediction per member
};

/// Exp1: explicit signal and no strong action in the first-read session; positive iff a strong action
/// happens in a later session. Exp2: strong action at any time and explicit signal. Exp3: strong action at
/// any time. For Exp2/3 a member is positive iff all its strong actions fall after the first-read session.
/// Baseline: all positive for Exp1/2, explicit signal for Exp3. Throws DataError on an empty cohort.
Cohort build_cohort(const ExperimentSpec& spec, const LabelMap& labels, const Sessions& sessions,
                    const CorpusIndex& index);

/// Deterministic message-level split: returns (train rows, test rows), each ascending.
/// Throws DataError when either side would be empty.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double test_fraction,
                                                                         std::uint64_t seed);

struct ExperimentOptions {
    double positive_weight{10.0};
    std::vector<GbdtParams> grid{default_param_grid()};
    std::size_t cv_folds{5};
    std::uint64_t cv_seed{1};
};

struct ExperimentResult {
    int id{0};
    std::size_t cohort_size{0};
    std::size_t train_size{0};
    std::size_t test_size{0};
    double positive_rate{0.0};  ///< over the whole cohort
    Metrics model;
    Metrics baseline;
    GbdtParams chosen;
    std::vector<std::pair<std::string, double>> top_features;  ///< up to 10, by importance
    std::vector<std::string> warnings;
};

struct EvalReport {
    std::vector<ExperimentResult> experiments;
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const LabelMap& labels, const Sessions& sessions,
                                const CorpusIndex& index, const ProfileMap& profiles,
                                const ExperimentOptions& options = {}, Model* model_out = nullptr,
                                Dataset* data_out = nullptr);

/// Model / baseline rows against P R F1 columns per experiment.
void write_report_text(std::ostream& out, const EvalReport& report);
void write_report_json(std::ostream& out, const EvalReport& report);
EvalReport read_report_json(std::istream& in);

}  // namespace deferral
