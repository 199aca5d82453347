#include "deferral/featurizer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "deferral/csv.hpp"
#include "deferral/error.hpp"
#include "deferral/parallel.hpp"

namespace deferral {

namespace {

constexpr std::array<FeatureColumn, kNumFeatures> kColumns = {{
    {"NumResponse", "NumRespone"},
    {"NumFlag", "NumFlag"},
    {"NumMarkUnread", "NumMarkUnRead"},
    {"NumOpenAtt", "NumOpenAtt"},
    {"NumLinkClk", "NumLinkClK"},
    {"NumMove", "NumMove"},
    {"NumDelete", "NumDelete"},
    {"NumSearch", "NumSearch"},
    {"UniqueBodyLength", "UniqueBodyLength"},
    {"isBulkMessage", "isBulkMessage"},
    {"isInThread", "isInThread"},
    {"numRecipients", "numRecipients"},
    {"isHuman", "isHuman"},
    {"isSenderFromSameOrg", "isSenderFromSameOrg"},
    {"isKnownSender", "isKnownSender"},
    {"isImportantSender", "isImportantSender"},
    {"MailboxSizeBucket", "MailboxSize"},
    {"ManagementStyle_Piler", "ManagementStyle"},
    {"ManagementStyle_ZeroInbox", "ManagementStyle"},
    {"ManagementStyle_ZeroUnread", "ManagementStyle"},
    {"NumMessages", "NumMessages"},
    {"NumMessagesSLTS", "NumMessagesSLTS"},
    {"NumMeetings", "NumMeetings"},
    {"NumMeetingsOrg", "NumMeetingsOrg"},
    {"TimeBusy", "TimeBusy"},
    {"TimeFree", "TimeFree"},
    {"TimeTentative", "TimeTentative"},
    {"TimeOOO", "TimeOOO"},
    {"HourOfDay", "HourOfDay"},
    {"DayOfWeek", "DayOfWeek"},
    {"DayOfMonth", "DayOfMonth"},
    {"Month", "Month"},
    {"calendar_present", ""},
}};

enum Col : std::size_t {
    kNumResponse, kNumFlag, kNumMarkUnread, kNumOpenAtt, kNumLinkClk, kNumMove, kNumDelete, kNumSearch,
    kBodyLength, kBulk, kInThread, kRecipients, kHuman, kSameOrg, kKnown, kImportant,
    kMailbox, kStylePiler, kStyleZeroInbox, kStyleZeroUnread,
    kNumMessages, kNumMessagesSlts, kMeetings, kMeetingsOrg, kBusy, kFree, kTentative, kOoo,
    kHour, kDayOfWeek, kDayOfMonth, kMonth, kCalendarPresent,
};
static_assert(kCalendarPresent + 1 == kNumFeatures);

double parse_number(const std::string& s, const char* source, std::size_t line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError(source, line, "not a number: \"" + s + "\"");
    return v;
}

}  // namespace

const std::array<FeatureColumn, kNumFeatures>& feature_columns() { return kColumns; }

std::size_t feature_index(std::string_view name) {
    for (std::size_t i = 0; i < kColumns.size(); ++i) {
        if (kColumns[i].name == name) return i;
    }
    throw LookupError("unknown feature column \"" + std::string(name) + "\"");
}

std::int32_t mailbox_size_bucket(std::int64_t delivered) noexcept {
    if (delivered < 10) return 0;
    if (delivered < 25) return 1;
    if (delivered < 100) return 2;
    return 3;
}

UserProfile infer_profile(std::string_view user_id, const CorpusIndex& index, const ProfileOptions& options) {
    const std::size_t u = index.user_index(user_id);
    const auto& actions = index.corpus().actions;
    UserProfile p;
    p.user_id = std::string(user_id);
    const auto& delivered = index.deliveries(u);
    p.delivered = static_cast<std::int64_t>(delivered.size());
    p.mailbox_size_bucket = mailbox_size_bucket(p.delivered);

    std::size_t read = 0, filed = 0;
    for (std::size_t m : delivered) {
        bool was_read = false, was_filed = false;
        for (std::size_t i : index.actions_of(m)) {
            was_read |= actions[i].action == ActionType::Read;
            was_filed |= actions[i].action == ActionType::Move || actions[i].action == ActionType::Delete;
        }
        read += was_read;
        filed += was_read && was_filed;
    }
    if (read > 0 && static_cast<double>(filed) >= options.zero_inbox_threshold * static_cast<double>(read)) {
        p.management_style = ManagementStyle::ZeroInbox;
    } else if (!delivered.empty() &&
               static_cast<double>(read) >= options.zero_unread_threshold * static_cast<double>(delivered.size())) {
        p.management_style = ManagementStyle::ZeroUnread;
    } else {
        p.management_style = ManagementStyle::Piler;
    }
    return p;
}

ProfileMap infer_profiles(const CorpusIndex& index, const ProfileOptions& options) {
    ProfileMap out;
    for (const auto& u : index.users()) out.emplace(u, infer_profile(u, index, options));
    return out;
}

FeatureVector extract_features(std::size_t m, const LabelMap& labels, const Sessions& sessions,
                               const CorpusIndex& index, const ProfileMap& profiles) {
    const auto& id = index.message_id(m);
    const auto label = labels.find(id);
    if (label == labels.end()) throw LookupError("no label for message \"" + id + "\"");
    if (!label->second.first_read_session) throw DataError("no first read: message \"" + id + "\"");
    const std::int32_t read_session = *label->second.first_read_session;

    const auto& meta = index.meta(m);
    const auto& actions = index.corpus().actions;
    const auto& user_sessions = sessions.of_user(meta.user_id);
    const auto read_action = index.first_read_action(m);
    if (!read_action) throw DataError("no first read: message \"" + id + "\"");
    const Timestamp t = actions[*read_action].timestamp;

    FeatureVector f{};
    for (std::size_t i : index.actions_of(m)) {
        if (sessions.ordinal_of_action[i] != read_session) continue;
        switch (actions[i].action) {
            case ActionType::Reply:
            case ActionType::ReplyAll:
            case ActionType::Forward: f[kNumResponse] += 1; break;
            case ActionType::Flag:
            case ActionType::FlagComplete: f[kNumFlag] += 1; break;
            case ActionType::MarkAsUnread: f[kNumMarkUnread] += 1; break;
            case ActionType::OpenedAnAttachment: f[kNumOpenAtt] += 1; break;
            case ActionType::LinkClicked: f[kNumLinkClk] += 1; break;
            case ActionType::Move: f[kNumMove] += 1; break;
            case ActionType::Delete: f[kNumDelete] += 1; break;
            case ActionType::SearchRetrieved: f[kNumSearch] += 1; break;
            default: break;
        }
    }

    f[kBodyLength] = static_cast<double>(meta.unique_body_length);
    f[kBulk] = meta.is_bulk;
    f[kInThread] = meta.is_in_thread;
    f[kRecipients] = static_cast<double>(meta.num_recipients);
    f[kHuman] = meta.is_human_sender;
    f[kSameOrg] = meta.is_same_org;
    f[kKnown] = meta.is_known_sender;
    f[kImportant] = meta.is_important_sender;

    const auto profile = profiles.find(meta.user_id);
    if (profile == profiles.end()) throw LookupError("no profile for user \"" + meta.user_id + "\"");
    f[kMailbox] = profile->second.mailbox_size_bucket;
    f[kStylePiler + static_cast<std::size_t>(profile->second.management_style)] = 1.0;

    f[kNumMessages] = static_cast<double>(index.unhandled_at(m, t));
    const Timestamp previous_end = read_session > 0
                                       ? user_sessions.at(static_cast<std::size_t>(read_session - 1)).end_ts
                                       : std::numeric_limits<Timestamp>::min();
    f[kNumMessagesSlts] = static_cast<double>(index.delivered_between(m, previous_end, t));

    if (const CalendarSlot* slot = index.calendar_slot(meta.user_id, t)) {
        f[kMeetings] = static_cast<double>(slot->num_meetings);
        f[kMeetingsOrg] = static_cast<double>(slot->num_meetings_organized);
        f[kBusy] = slot->frac_busy;
        f[kFree] = slot->frac_free;
        f[kTentative] = slot->frac_tentative;
        f[kOoo] = slot->frac_ooo;
        f[kCalendarPresent] = 1.0;
    }

    using namespace std::chrono;
    const sys_seconds when{seconds{t}};
    const auto day = floor<days>(when);
    const year_month_day ymd{day};
    f[kHour] = static_cast<double>(duration_cast<hours>(when - day).count());
    f[kDayOfWeek] = static_cast<double>((weekday{day}.c_encoding() + 6) % 7);
    f[kDayOfMonth] = static_cast<double>(static_cast<unsigned>(ymd.day()));
    f[kMonth] = static_cast<double>(static_cast<unsigned>(ymd.month()));
    return f;
}

void Dataset::validate() const {
    if (x.size() != rows() * cols()) throw ValidationError("feature matrix size does not match rows x cols");
    if (y.size() != rows() || weights.size() != rows()) throw ValidationError("labels/weights not aligned with rows");
    for (double w : weights) {
        if (!(w > 0.0)) throw ValidationError("instance weights must be positive");
    }
    for (auto v : y) {
        if (v > 1) throw ValidationError("labels must be 0 or 1");
    }
}

Dataset Dataset::without_columns(const std::vector<std::string>& names) const {
    std::vector<bool> drop(cols(), false);
    for (const auto& n : names) {
        const auto it = std::find(feature_names.begin(), feature_names.end(), n);
        if (it == feature_names.end()) throw LookupError("unknown feature column \"" + n + "\"");
        drop[static_cast<std::size_t>(it - feature_names.begin())] = true;
    }
    Dataset out;
    out.message_ids = message_ids;
    out.y = y;
    out.weights = weights;
    for (std::size_t c = 0; c < cols(); ++c) {
        if (!drop[c]) out.feature_names.push_back(feature_names[c]);
    }
    out.x.reserve(rows() * out.cols());
    for (std::size_t r = 0; r < rows(); ++r) {
        for (std::size_t c = 0; c < cols(); ++c) {
            if (!drop[c]) out.x.push_back(at(r, c));
        }
    }
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows_wanted) const {
    Dataset out;
    out.feature_names = feature_names;
    out.x.reserve(rows_wanted.size() * cols());
    for (std::size_t r : rows_wanted) {
        out.message_ids.push_back(message_ids.at(r));
        out.y.push_back(y[r]);
        out.weights.push_back(weights[r]);
        const auto src = row(r);
        out.x.insert(out.x.end(), src.begin(), src.end());
    }
    return out;
}

Dataset build_dataset(const std::vector<std::string>& cohort, const std::vector<bool>& positive,
                      const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                      const ProfileMap& profiles, double positive_weight) {
    if (cohort.empty()) throw DataError("empty cohort");
    if (positive.size() != cohort.size()) throw ValidationError("cohort and label vectors differ in length");
    if (!(positive_weight > 0.0)) throw ValidationError("positive_weight must be > 0");

    Dataset data;
    for (const auto& c : kColumns) data.feature_names.emplace_back(c.name);
    data.message_ids = cohort;
    data.x.assign(cohort.size() * kNumFeatures, 0.0);
    parallel_for(cohort.size(), [&](std::size_t r) {
        const auto f = extract_features(index.message_index(cohort[r]), labels, sessions, index, profiles);
        std::copy(f.begin(), f.end(), data.x.begin() + static_cast<std::ptrdiff_t>(r * kNumFeatures));
    });
    for (bool p : positive) {
        data.y.push_back(p ? 1 : 0);
        data.weights.push_back(p ? positive_weight : 1.0);
    }
    return data;
}

void write_features_csv(std::ostream& out, const Dataset& data) {
    std::vector<std::string> fields{"message_id"};
    fields.insert(fields.end(), data.feature_names.begin(), data.feature_names.end());
    csv::write_row(out, fields);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        fields.assign(1, data.message_ids[r]);
        for (double v : data.row(r)) fields.push_back(csv::format_double(v));
        csv::write_row(out, fields);
    }
}

void write_labels_csv(std::ostream& out, const Dataset& data) {
    csv::write_row(out, {"message_id", "label"});
    for (std::size_t r = 0; r < data.rows(); ++r) {
        csv::write_row(out, {data.message_ids[r], std::to_string(data.y[r])});
    }
}

void write_weights_csv(std::ostream& out, const Dataset& data) {
    csv::write_row(out, {"message_id", "weight"});
    for (std::size_t r = 0; r < data.rows(); ++r) {
        csv::write_row(out, {data.message_ids[r], csv::format_double(data.weights[r])});
    }
}

Dataset read_features_csv(std::istream& in) {
    Dataset data;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("features.csv", 1, "missing header");
    ++lineno;
    auto header = csv::split_line(line);
    if (header.empty() || header[0] != "message_id") throw ParseError("features.csv", 1, "first column must be message_id");
    data.feature_names.assign(header.begin() + 1, header.end());
    std::set<std::string_view> seen_names;
    for (const auto& n : data.feature_names) {
        if (!seen_names.insert(n).second) throw ParseError("features.csv", 1, "duplicate column \"" + n + "\"");
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = csv::split_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("features.csv", lineno,
                             "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
        }
        data.message_ids.push_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) data.x.push_back(parse_number(fields[c], "features.csv", lineno));
    }
    data.y.assign(data.rows(), 0);
    data.weights.assign(data.rows(), 1.0);
    return data;
}

namespace {

std::map<std::string, double> read_column(std::istream& in, const char* source, const char* column) {
    std::map<std::string, double> out;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
    ++lineno;
    const auto header = csv::split_line(line);
    if (header.size() != 2 || header[0] != "message_id" || header[1] != column) {
        throw ParseError(source, 1, std::string("expected header message_id,") + column);
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = csv::split_line(line);
        if (fields.size() != 2) throw ParseError(source, lineno, "expected 2 fields");
        if (!out.emplace(fields[0], parse_number(fields[1], source, lineno)).second) {
            throw ParseError(source, lineno, "duplicate message_id \"" + fields[0] + "\"");
        }
    }
    return out;
}

}  // namespace

Dataset read_dataset(std::istream& features, std::istream& labels, std::istream& weights) {
    Dataset data = read_features_csv(features);
    const auto y = read_column(labels, "labels.csv", "label");
    const auto w = read_column(weights, "weights.csv", "weight");
    if (y.size() != data.rows() || w.size() != data.rows()) {
        throw IntegrityError("features, labels and weights cover different message sets");
    }
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto& id = data.message_ids[r];
        const auto yi = y.find(id);
        const auto wi = w.find(id);
        if (yi == y.end() || wi == w.end()) throw IntegrityError("message \"" + id + "\" missing from labels or weights");
        if (yi->second != 0.0 && yi->second != 1.0) throw ValidationError("label of \"" + id + "\" is not 0/1");
        data.y[r] = static_cast<std::uint8_t>(yi->second);
        data.weights[r] = wi->second;
    }
    data.validate();
    return data;
}

}  // namespace deferral
