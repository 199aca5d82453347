#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "deferral/labeler.hpp"
#include "deferral/log_model.hpp"
#include "deferral/sessionizer.hpp"

namespace deferral {

struct StatRow {
    std::string group;
    std::string statistic;
    double value{0.0};
    double ci_low{0.0};
    double ci_high{0.0};
    std::size_t n{0};  ///< resampling units behind the value
};

struct StatTable {
    std::string name;
    std::vector<StatRow> rows;
    std::vector<std::string> notes;

    const StatRow* find(std::string_view group, std::string_view statistic) const;
};

/// Which sessions after the first read count as the "revisit" session.
enum class RevisitScope : std::uint8_t { FirstRevisit, AnyLater };

enum class WorkloadMeasure : std::uint8_t { Unhandled, Meetings };

struct CharacterizeOptions {
    std::size_t num_resamples{1000};
    double alpha{0.05};
    std::uint64_t seed{1};
    /// A triage session holds at least this many first reads.
    std::size_t triage_min_first_reads{1};
    RevisitScope revisit_scope{RevisitScope::FirstRevisit};
    WorkloadMeasure workload_measure{WorkloadMeasure::Unhandled};
    /// Lower bucket edges; the last bucket is open-ended.
    std::vector<double> bucket_edges{0, 1, 2, 4, 8, 16, 32};
};

/// Rows (group "all"): users_deferring_per_weekday, deferred_message_fraction,
/// triage_sessions_with_deferral.
StatTable headline_stats(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                         const CharacterizeOptions& options = {});

/// Per class: mean num_recipients and the five boolean metadata rates.
StatTable property_comparison(const LabelMap& labels, const CorpusIndex& index,
                              const CharacterizeOptions& options = {});

/// P(action observed on message | class) for the seven strategy actions. With
/// `split_by_session_kind`, groups become <class>-Read / <class>-Revisit; Revisit
/// rows are conditioned on messages that have a revisit session.
StatTable action_probabilities(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                               bool split_by_session_kind, const CharacterizeOptions& options = {});

/// P(Deferred) per bucket of the workload measure at first read, plus a baseline row.
StatTable workload_curve(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                         const CharacterizeOptions& options = {});

/// Deferred / NonDeferred / RepliedTo: P(MarkAsUnread) and mean num_recipients.
StatTable replied_comparison(const LabelMap& labels, const CorpusIndex& index,
                             const CharacterizeOptions& options = {});

/// All of the above, in a fixed order.
std::vector<StatTable> characterize(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                                    const CharacterizeOptions& options = {});

void write_table_text(std::ostream& out, const StatTable& table);
void write_table_csv(std::ostream& out, const StatTable& table);
StatTable read_table_csv(std::istream& in, std::string name);
/// gnuplot-friendly: bucket_lower value ci_low ci_high n, baseline as a comment line.
void write_workload_dat(std::ostream& out, const StatTable& workload);

}  // namespace deferral
