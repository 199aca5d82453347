#include "deferral/characterizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "deferral/csv.hpp"
#include "deferral/error.hpp"
#include "deferral/stats.hpp"

namespace deferral {

const StatRow* StatTable::find(std::string_view group, std::string_view statistic) const {
    for (const auto& r : rows) {
        if (r.group == group && r.statistic == statistic) return &r;
    }
    return nullptr;
}

namespace {

constexpr std::string_view kClassNames[] = {"Deferred", "NonDeferred"};

/// Label per message index; nullptr for messages absent from the label map.
std::vector<const DeferralLabel*> align_labels(const LabelMap& labels, const CorpusIndex& index) {
    std::vector<const DeferralLabel*> out(index.num_messages(), nullptr);
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        auto it = labels.find(index.message_id(m));
        if (it != labels.end()) out[m] = &it->second;
    }
    return out;
}

int class_of(const DeferralLabel* l) {
    if (l == nullptr) return -1;
    if (l->label == Label::Deferred) return 0;
    if (l->label == Label::NonDeferred) return 1;
    return -1;
}

class RowBuilder {
public:
    RowBuilder(StatTable& table, const CharacterizeOptions& options) : table_(table), options_(options) {}

    void proportion(std::string group, std::string statistic, std::size_t hits, std::size_t n) {
        if (n == 0) {
            table_.notes.push_back(group + "/" + statistic + ": no data");
            return;
        }
        const double value = static_cast<double>(hits) / static_cast<double>(n);
        const auto ci = bootstrap_proportion_ci(hits, n, options_.num_resamples, options_.alpha,
                                                seed_for(group, statistic));
        push(std::move(group), std::move(statistic), value, ci, n);
    }

    void mean_of(std::string group, std::string statistic, const std::vector<double>& xs) {
        if (xs.empty()) {
            table_.notes.push_back(group + "/" + statistic + ": no data");
            return;
        }
        const double value = mean(xs);
        const auto ci = bootstrap_mean_ci(xs, options_.num_resamples, options_.alpha, seed_for(group, statistic));
        push(std::move(group), std::move(statistic), value, ci, xs.size());
    }

private:
    std::uint64_t seed_for(const std::string& group, const std::string& statistic) const {
        return derive_seed(options_.seed, table_.name + "/" + group + "/" + statistic);
    }

    void push(std::string group, std::string statistic, double value, Interval ci, std::size_t n) {
        // Percentile intervals of very skewed statistics can miss the plug-in value.
        table_.rows.push_back(StatRow{std::move(group), std::move(statistic), value, std::min(ci.low, value),
                                      std::max(ci.high, value), n});
    }

    StatTable& table_;
    const CharacterizeOptions& options_;
};

std::int64_t utc_day(Timestamp t) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(t) / 86400.0));
}

bool is_weekday(std::int64_t day) {
    const std::chrono::weekday wd{std::chrono::sys_days{std::chrono::days{day}}};
    return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

/// Per message, the set of strategy actions seen in the read session and the revisit scope.
struct SessionSplit {
    bool has_revisit{false};
    std::array<bool, kStrategyActions.size()> in_read{};
    std::array<bool, kStrategyActions.size()> in_revisit{};
};

int strategy_slot(ActionType a) {
    for (std::size_t k = 0; k < kStrategyActions.size(); ++k) {
        if (kStrategyActions[k] == a) return static_cast<int>(k);
    }
    return -1;
}

SessionSplit split_message(std::size_t m, std::int32_t read_session, const Sessions& sessions,
                           const CorpusIndex& index, RevisitScope scope) {
    const auto& actions = index.corpus().actions;
    SessionSplit out;
    std::int32_t revisit = -1;
    for (std::size_t i : index.actions_of(m)) {
        const std::int32_t s = sessions.ordinal_of_action[i];
        if (s > read_session && revisit < 0) revisit = s;
    }
    out.has_revisit = revisit >= 0;
    for (std::size_t i : index.actions_of(m)) {
        const int slot = strategy_slot(actions[i].action);
        if (slot < 0) continue;
        const std::int32_t s = sessions.ordinal_of_action[i];
        if (s == read_session) out.in_read[slot] = true;
        const bool in_scope = scope == RevisitScope::FirstRevisit ? s == revisit : s > read_session;
        if (revisit >= 0 && in_scope) out.in_revisit[slot] = true;
    }
    return out;
}

std::string bucket_name(const std::vector<double>& edges, std::size_t k) {
    std::ostringstream os;
    os << '[' << csv::format_double(edges[k]) << ',';
    if (k + 1 < edges.size()) {
        os << csv::format_double(edges[k + 1]) << ')';
    } else {
        os << "inf)";
    }
    return os.str();
}

}  // namespace

StatTable headline_stats(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                         const CharacterizeOptions& options) {
    StatTable table{"headline", {}, {}};
    RowBuilder rows(table, options);
    const auto aligned = align_labels(labels, index);
    const auto& actions = index.corpus().actions;

    // (a) users deferring at least one message per weekday, averaged over weekdays.
    std::map<std::int64_t, std::set<std::size_t>> deferring_users_by_day;
    std::int64_t first_day = std::numeric_limits<std::int64_t>::max();
    std::int64_t last_day = std::numeric_limits<std::int64_t>::min();
    // Days are taken over the delivery window; trailing days that only hold late actions would dilute the mean.
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        first_day = std::min(first_day, utc_day(index.meta(m).delivery_time));
        last_day = std::max(last_day, utc_day(index.meta(m).delivery_time));
    }
    std::size_t deferred = 0, labelled = 0;
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        const int c = class_of(aligned[m]);
        if (c < 0) continue;
        ++labelled;
        if (c != 0) continue;
        ++deferred;
        const auto read = index.first_read_action(m);
        if (read) deferring_users_by_day[utc_day(actions[*read].timestamp)].insert(index.user_of(m));
    }
    std::vector<double> per_weekday;
    const double num_users = static_cast<double>(index.users().size());
    if (index.num_messages() > 0 && num_users > 0) {
        for (std::int64_t d = first_day; d <= last_day; ++d) {
            if (!is_weekday(d)) continue;
            auto it = deferring_users_by_day.find(d);
            per_weekday.push_back(it == deferring_users_by_day.end() ? 0.0
                                                                     : static_cast<double>(it->second.size()) / num_users);
        }
    }
    if (per_weekday.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        table.rows.push_back(StatRow{"all", "users_deferring_per_weekday", nan, nan, nan, 0});
        table.notes.push_back("users_deferring_per_weekday: undefined, corpus spans no weekday");
    } else {
        rows.mean_of("all", "users_deferring_per_weekday", per_weekday);
    }

    // (b) message-level deferral rate.
    rows.proportion("all", "deferred_message_fraction", deferred, labelled);

    // (c) triage sessions holding a first read of a later-deferred message.
    std::map<SessionId, std::pair<std::size_t, bool>> first_reads;  // count, any deferred
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        const auto read = index.first_read_action(m);
        if (!read) continue;
        auto& entry = first_reads[SessionId{actions[*read].user_id, sessions.ordinal_of_action[*read]}];
        ++entry.first;
        if (class_of(aligned[m]) == 0) entry.second = true;
    }
    std::size_t triage = 0, with_deferral = 0;
    for (const auto& [id, entry] : first_reads) {
        if (entry.first < std::max<std::size_t>(options.triage_min_first_reads, 1)) continue;
        ++triage;
        if (entry.second) ++with_deferral;
    }
    rows.proportion("all", "triage_sessions_with_deferral", with_deferral, triage);
    return table;
}

StatTable property_comparison(const LabelMap& labels, const CorpusIndex& index, const CharacterizeOptions& options) {
    StatTable table{"properties", {}, {}};
    RowBuilder rows(table, options);
    const auto aligned = align_labels(labels, index);
    for (int c = 0; c < 2; ++c) {
        std::vector<double> recipients;
        std::array<std::size_t, 5> hits{};
        for (std::size_t m = 0; m < index.num_messages(); ++m) {
            if (class_of(aligned[m]) != c) continue;
            const auto& meta = index.meta(m);
            recipients.push_back(static_cast<double>(meta.num_recipients));
            hits[0] += meta.is_action_request;
            hits[1] += meta.is_reply_request;
            hits[2] += meta.is_human_sender;
            hits[3] += meta.is_known_sender;
            hits[4] += meta.is_important_sender;
        }
        const std::string group(kClassNames[c]);
        rows.mean_of(group, "num_recipients", recipients);
        const std::size_t n = recipients.size();
        rows.proportion(group, "is_action_request", hits[0], n);
        rows.proportion(group, "is_reply_request", hits[1], n);
        rows.proportion(group, "is_human_sender", hits[2], n);
        rows.proportion(group, "is_known_sender", hits[3], n);
        rows.proportion(group, "is_important_sender", hits[4], n);
    }
    return table;
}

StatTable action_probabilities(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                               bool split_by_session_kind, const CharacterizeOptions& options) {
    StatTable table{split_by_session_kind ? "actions_by_session" : "actions", {}, {}};
    RowBuilder rows(table, options);
    const auto aligned = align_labels(labels, index);
    const auto& actions = index.corpus().actions;
    constexpr std::size_t K = kStrategyActions.size();

    for (int c = 0; c < 2; ++c) {
        const std::string group(kClassNames[c]);
        std::size_t n = 0, n_revisit = 0;
        std::array<std::size_t, K> any{}, read{}, revisit{};
        for (std::size_t m = 0; m < index.num_messages(); ++m) {
            const DeferralLabel* l = aligned[m];
            if (class_of(l) != c) continue;
            ++n;
            if (!split_by_session_kind) {
                std::array<bool, K> seen{};
                for (std::size_t i : index.actions_of(m)) {
                    const int slot = strategy_slot(actions[i].action);
                    if (slot >= 0) seen[slot] = true;
                }
                for (std::size_t k = 0; k < K; ++k) any[k] += seen[k];
                continue;
            }
            const auto split = split_message(m, *l->first_read_session, sessions, index, options.revisit_scope);
            n_revisit += split.has_revisit;
            for (std::size_t k = 0; k < K; ++k) {
                read[k] += split.in_read[k];
                revisit[k] += split.in_revisit[k];
            }
        }
        for (std::size_t k = 0; k < K; ++k) {
            const std::string stat(to_string(kStrategyActions[k]));
            if (!split_by_session_kind) {
                rows.proportion(group, stat, any[k], n);
            } else {
                rows.proportion(group + "-Read", stat, read[k], n);
                rows.proportion(group + "-Revisit", stat, revisit[k], n_revisit);
            }
        }
    }
    return table;
}

StatTable workload_curve(const LabelMap& labels, const Sessions& /*sessions*/, const CorpusIndex& index,
                         const CharacterizeOptions& options) {
    const bool meetings = options.workload_measure == WorkloadMeasure::Meetings;
    StatTable table{meetings ? "workload_meetings" : "workload_unhandled", {}, {}};
    RowBuilder rows(table, options);
    const auto& edges = options.bucket_edges;
    if (edges.empty() || !std::is_sorted(edges.begin(), edges.end())) {
        throw ValidationError("bucket edges must be non-empty and ascending");
    }
    const auto aligned = align_labels(labels, index);
    const auto& actions = index.corpus().actions;

    std::vector<std::size_t> hits(edges.size(), 0), totals(edges.size(), 0);
    std::size_t all_hits = 0, all_total = 0;
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        const int c = class_of(aligned[m]);
        if (c < 0) continue;
        const Timestamp t = actions[*index.first_read_action(m)].timestamp;
        double x = 0.0;
        if (meetings) {
            const auto* slot = index.calendar_slot(index.meta(m).user_id, t);
            x = slot ? static_cast<double>(slot->num_meetings) : 0.0;
        } else {
            x = static_cast<double>(index.unhandled_at(m, t));
        }
        ++all_total;
        all_hits += c == 0;
        if (x < edges.front()) continue;
        const auto k = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()) - 1;
        ++totals[k];
        hits[k] += c == 0;
    }
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (totals[k] == 0) {
            table.notes.push_back(bucket_name(edges, k) + ": empty bucket omitted");
            continue;
        }
        rows.proportion(bucket_name(edges, k), "p_deferred", hits[k], totals[k]);
    }
    rows.proportion("baseline", "p_deferred", all_hits, all_total);
    return table;
}

StatTable replied_comparison(const LabelMap& labels, const CorpusIndex& index, const CharacterizeOptions& options) {
    StatTable table{"replied", {}, {}};
    RowBuilder rows(table, options);
    const auto aligned = align_labels(labels, index);
    const auto& actions = index.corpus().actions;

    constexpr std::array<std::string_view, 3> groups = {"Deferred", "NonDeferred", "RepliedTo"};
    std::array<std::vector<double>, 3> recipients;
    std::array<std::size_t, 3> unread{};
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        const int c = class_of(aligned[m]);
        if (c < 0) continue;
        bool strong = false, mau = false;
        for (std::size_t i : index.actions_of(m)) {
            strong |= is_strong_action(actions[i].action);
            mau |= actions[i].action == ActionType::MarkAsUnread;
        }
        const double r = static_cast<double>(index.meta(m).num_recipients);
        recipients[c].push_back(r);
        unread[c] += mau;
        if (strong) {
            recipients[2].push_back(r);
            unread[2] += mau;
        }
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::string group(groups[g]);
        rows.proportion(group, "MarkAsUnread", unread[g], recipients[g].size());
        rows.mean_of(group, "num_recipients", recipients[g]);
    }
    return table;
}

std::vector<StatTable> characterize(const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                                    const CharacterizeOptions& options) {
    std::vector<StatTable> out;
    out.push_back(headline_stats(labels, sessions, index, options));
    out.push_back(property_comparison(labels, index, options));
    out.push_back(action_probabilities(labels, sessions, index, false, options));
    out.push_back(action_probabilities(labels, sessions, index, true, options));
    out.push_back(replied_comparison(labels, index, options));
    out.push_back(workload_curve(labels, sessions, index, options));
    auto meeting_options = options;
    meeting_options.workload_measure = WorkloadMeasure::Meetings;
    meeting_options.bucket_edges = {0, 1, 2, 3, 4, 5, 6};
    out.push_back(workload_curve(labels, sessions, index, meeting_options));
    return out;
}

void write_table_text(std::ostream& out, const StatTable& table) {
    std::size_t wg = 5, ws = 9;
    for (const auto& r : table.rows) {
        wg = std::max(wg, r.group.size());
        ws = std::max(ws, r.statistic.size());
    }
    const auto flags = out.flags();
    out << "== " << table.name << " ==\n";
    out << std::left << std::setw(static_cast<int>(wg)) << "group" << "  " << std::setw(static_cast<int>(ws))
        << "statistic" << std::right << std::setw(11) << "value" << std::setw(11) << "ci_low" << std::setw(11)
        << "ci_high" << std::setw(9) << "n" << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& r : table.rows) {
        out << std::left << std::setw(static_cast<int>(wg)) << r.group << "  " << std::setw(static_cast<int>(ws))
            << r.statistic << std::right << std::setw(11) << r.value << std::setw(11) << r.ci_low << std::setw(11)
            << r.ci_high << std::setw(9) << r.n << '\n';
    }
    for (const auto& note : table.notes) out << "  note: " << note << '\n';
    out.flags(flags);
}

void write_table_csv(std::ostream& out, const StatTable& table) {
    csv::write_row(out, {"group", "statistic", "value", "ci_low", "ci_high", "n"});
    for (const auto& r : table.rows) {
        csv::write_row(out, {r.group, r.statistic, csv::format_double(r.value), csv::format_double(r.ci_low),
                             csv::format_double(r.ci_high), std::to_string(r.n)});
    }
}

StatTable read_table_csv(std::istream& in, std::string name) {
    StatTable table{std::move(name), {}, {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        const auto f = csv::split_line(line);
        if (f.size() != 6) throw ParseError(table.name + ".csv", lineno, "expected 6 fields");
        try {
            table.rows.push_back(
                StatRow{f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stoull(f[5])});
        } catch (const std::exception& e) {
            throw ParseError(table.name + ".csv", lineno, e.what());
        }
    }
    return table;
}

void write_workload_dat(std::ostream& out, const StatTable& workload) {
    out << "# " << workload.name << ": bucket_lower p_deferred ci_low ci_high n\n";
    for (const auto& r : workload.rows) {
        if (r.group == "baseline") {
            out << "# baseline " << csv::format_double(r.value) << ' ' << csv::format_double(r.ci_low) << ' '
                << csv::format_double(r.ci_high) << ' ' << r.n << '\n';
            continue;
        }
        // group looks like "[lo,hi)"
        const auto lower = r.group.substr(1, r.group.find(',') - 1);
        out << lower << ' ' << csv::format_double(r.value) << ' ' << csv::format_double(r.ci_low) << ' '
            << csv::format_double(r.ci_high) << ' ' << r.n << '\n';
    }
}

}  // namespace deferral
