#include "deferral/log_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "deferral/error.hpp"

namespace deferral {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, kNumActionTypes> kActionNames = {
    "Read",         "Reply",  "ReplyAll", "Forward",     "Flag",               "FlagComplete",
    "MarkAsUnread", "Delete", "Move",     "LinkClicked", "OpenedAnAttachment", "SearchRetrieved",
};

template <typename T>
T field(const json& j, const char* key, const std::string& source, std::size_t line) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError(source, line, std::string("missing field \"") + key + "\"");
    }
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ParseError(source, line, std::string("field \"") + key + "\" must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ParseError(source, line, std::string("field \"") + key + "\" must be an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ParseError(source, line, std::string("field \"") + key + "\" must be a number");
        } else {
            if (!it->is_string()) throw ParseError(source, line, std::string("field \"") + key + "\" must be a string");
        }
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ParseError(source, line, e.what());
    }
}

template <typename Fn>
void for_each_line(std::istream& in, const std::string& source, Fn&& fn) {
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(source, line, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(source, line, "record must be a JSON object");
        fn(j, line);
    }
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

std::string_view to_string(ActionType a) noexcept {
    return kActionNames[static_cast<std::size_t>(a)];
}

std::string_view to_string(ManagementStyle s) noexcept {
    switch (s) {
        case ManagementStyle::Piler: return "Piler";
        case ManagementStyle::ZeroInbox: return "ZeroInbox";
        case ManagementStyle::ZeroUnread: return "ZeroUnread";
    }
    return "?";
}

ActionType parse_action_type(std::string_view verb) {
    for (std::size_t i = 0; i < kActionNames.size(); ++i) {
        if (kActionNames[i] == verb) return static_cast<ActionType>(i);
    }
    throw ValidationError("unknown action verb \"" + std::string(verb) + "\"");
}

bool action_order(const ActionRecord& a, const ActionRecord& b) noexcept {
    return std::tie(a.user_id, a.timestamp, a.message_id, a.action) <
           std::tie(b.user_id, b.timestamp, b.message_id, b.action);
}

void validate(const MessageMeta& m) {
    if (m.message_id.empty()) throw ValidationError("message with empty id");
    if (m.num_recipients < 1) {
        throw ValidationError("message " + m.message_id + ": num_recipients must be >= 1");
    }
    if (m.unique_body_length < 0) {
        throw ValidationError("message " + m.message_id + ": unique_body_length must be >= 0");
    }
}

void validate(const CalendarSlot& s) {
    const std::string where = "calendar slot (" + s.user_id + ", " + std::to_string(s.slot_start) + ")";
    if (s.slot_start % 3600 != 0) throw ValidationError(where + ": slot_start is not hour-aligned");
    if (s.num_meetings < 0) throw ValidationError(where + ": num_meetings must be >= 0");
    if (s.num_meetings_organized < 0 || s.num_meetings_organized > s.num_meetings) {
        throw ValidationError(where + ": num_meetings_organized must be in [0, num_meetings]");
    }
    for (double f : {s.frac_busy, s.frac_free, s.frac_tentative, s.frac_ooo}) {
        if (!in_unit_interval(f)) throw ValidationError(where + ": fraction outside [0,1]");
    }
    const double sum = s.frac_busy + s.frac_free + s.frac_tentative + s.frac_ooo;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError(where + ": fractions sum to " + std::to_string(sum) + ", expected 1");
    }
}

std::vector<std::string> Corpus::users() const {
    std::set<std::string> all;
    for (const auto& a : actions) all.insert(a.user_id);
    for (const auto& [id, m] : messages) all.insert(m.user_id);
    for (const auto& [key, s] : calendar) all.insert(key.first);
    return {all.begin(), all.end()};
}

void Corpus::normalize() {
    std::sort(actions.begin(), actions.end(), action_order);
    for (const auto& [id, m] : messages) {
        if (id != m.message_id) throw IntegrityError("message map key " + id + " does not match its id");
        validate(m);
    }
    for (const auto& [key, s] : calendar) {
        if (key.first != s.user_id || key.second != s.slot_start) {
            throw IntegrityError("calendar map key does not match slot");
        }
        validate(s);
    }
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const auto& a = actions[i];
        auto it = messages.find(a.message_id);
        if (it == messages.end()) {
            throw IntegrityError("action references unknown message \"" + a.message_id + "\"");
        }
        if (it->second.user_id != a.user_id) {
            throw IntegrityError("action by user \"" + a.user_id + "\" on message \"" + a.message_id +
                                 "\" owned by \"" + it->second.user_id + "\"");
        }
        if (a.timestamp < it->second.delivery_time) {
            throw ValidationError("action on \"" + a.message_id + "\" at " + std::to_string(a.timestamp) +
                                  " precedes delivery");
        }
        if (i > 0 && actions[i - 1] == a) {
            throw ValidationError("duplicate action record on \"" + a.message_id + "\" at " +
                                  std::to_string(a.timestamp));
        }
    }
}

Corpus parse_corpus(std::istream& actions, std::istream& messages, std::istream& calendar) {
    Corpus corpus;

    for_each_line(messages, kMessagesFile, [&](const json& j, std::size_t line) {
        MessageMeta m;
        m.message_id = field<std::string>(j, "message_id", kMessagesFile, line);
        m.user_id = field<std::string>(j, "user_id", kMessagesFile, line);
        m.delivery_time = field<Timestamp>(j, "delivery_time", kMessagesFile, line);
        m.unique_body_length = field<std::int64_t>(j, "unique_body_length", kMessagesFile, line);
        m.num_recipients = field<std::int64_t>(j, "num_recipients", kMessagesFile, line);
        m.is_bulk = field<bool>(j, "is_bulk", kMessagesFile, line);
        m.is_in_thread = field<bool>(j, "is_in_thread", kMessagesFile, line);
        m.is_human_sender = field<bool>(j, "is_human_sender", kMessagesFile, line);
        m.is_same_org = field<bool>(j, "is_same_org", kMessagesFile, line);
        m.is_known_sender = field<bool>(j, "is_known_sender", kMessagesFile, line);
        m.is_important_sender = field<bool>(j, "is_important_sender", kMessagesFile, line);
        m.is_action_request = field<bool>(j, "is_action_request", kMessagesFile, line);
        m.is_reply_request = field<bool>(j, "is_reply_request", kMessagesFile, line);
        try {
            validate(m);
        } catch (const ValidationError& e) {
            throw ParseError(kMessagesFile, line, e.what());
        }
        auto id = m.message_id;
        if (!corpus.messages.emplace(id, std::move(m)).second) {
            throw IntegrityError("duplicate message id \"" + id + "\"");
        }
    });

    for_each_line(actions, kActionsFile, [&](const json& j, std::size_t line) {
        ActionRecord a;
        a.user_id = field<std::string>(j, "user", kActionsFile, line);
        a.message_id = field<std::string>(j, "msg", kActionsFile, line);
        const auto verb = field<std::string>(j, "action", kActionsFile, line);
        try {
            a.action = parse_action_type(verb);
        } catch (const ValidationError& e) {
            throw ParseError(kActionsFile, line, e.what());
        }
        a.timestamp = field<Timestamp>(j, "ts", kActionsFile, line);
        corpus.actions.push_back(std::move(a));
    });

    for_each_line(calendar, kCalendarFile, [&](const json& j, std::size_t line) {
        CalendarSlot s;
        s.user_id = field<std::string>(j, "user_id", kCalendarFile, line);
        s.slot_start = field<Timestamp>(j, "slot_start", kCalendarFile, line);
        s.num_meetings = field<std::int64_t>(j, "num_meetings", kCalendarFile, line);
        s.num_meetings_organized = field<std::int64_t>(j, "num_meetings_organized", kCalendarFile, line);
        s.frac_busy = field<double>(j, "frac_busy", kCalendarFile, line);
        s.frac_free = field<double>(j, "frac_free", kCalendarFile, line);
        s.frac_tentative = field<double>(j, "frac_tentative", kCalendarFile, line);
        s.frac_ooo = field<double>(j, "frac_ooo", kCalendarFile, line);
        validate(s);
        CalendarKey key{s.user_id, s.slot_start};
        if (!corpus.calendar.emplace(key, std::move(s)).second) {
            throw IntegrityError("duplicate calendar slot for user \"" + key.first + "\" at " +
                                 std::to_string(key.second));
        }
    });

    corpus.normalize();
    return corpus;
}

void write_actions(std::ostream& out, const Corpus& corpus) {
    for (const auto& a : corpus.actions) {
        ordered_json j;
        j["user"] = a.user_id;
        j["msg"] = a.message_id;
        j["action"] = std::string(to_string(a.action));
        j["ts"] = a.timestamp;
        out << j.dump() << '\n';
    }
}

void write_messages(std::ostream& out, const Corpus& corpus) {
    for (const auto& [id, m] : corpus.messages) {
        ordered_json j;
        j["message_id"] = m.message_id;
        j["user_id"] = m.user_id;
        j["delivery_time"] = m.delivery_time;
        j["unique_body_length"] = m.unique_body_length;
        j["num_recipients"] = m.num_recipients;
        j["is_bulk"] = m.is_bulk;
        j["is_in_thread"] = m.is_in_thread;
        j["is_human_sender"] = m.is_human_sender;
        j["is_same_org"] = m.is_same_org;
        j["is_known_sender"] = m.is_known_sender;
        j["is_important_sender"] = m.is_important_sender;
        j["is_action_request"] = m.is_action_request;
        j["is_reply_request"] = m.is_reply_request;
        out << j.dump() << '\n';
    }
}

void write_calendar(std::ostream& out, const Corpus& corpus) {
    for (const auto& [key, s] : corpus.calendar) {
        ordered_json j;
        j["user_id"] = s.user_id;
        j["slot_start"] = s.slot_start;
        j["num_meetings"] = s.num_meetings;
        j["num_meetings_organized"] = s.num_meetings_organized;
        j["frac_busy"] = s.frac_busy;
        j["frac_free"] = s.frac_free;
        j["frac_tentative"] = s.frac_tentative;
        j["frac_ooo"] = s.frac_ooo;
        out << j.dump() << '\n';
    }
}

Corpus load_corpus(const std::filesystem::path& dir) {
    auto open = [&](const char* name, bool required) {
        std::ifstream in(dir / name);
        if (!in && required) throw Error("cannot open input " + (dir / name).string());
        return in;
    };
    auto actions = open(kActionsFile, true);
    auto messages = open(kMessagesFile, true);
    auto calendar = open(kCalendarFile, false);
    if (!calendar) {
        std::istringstream empty;
        return parse_corpus(actions, messages, empty);
    }
    return parse_corpus(actions, messages, calendar);
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / name).string());
        return out;
    };
    auto a = open(kActionsFile);
    write_actions(a, corpus);
    auto m = open(kMessagesFile);
    write_messages(m, corpus);
    auto c = open(kCalendarFile);
    write_calendar(c, corpus);
}

Corpus filter_active_users(const Corpus& corpus, double min_interaction_ratio, FilterReport* report) {
    if (!(min_interaction_ratio > 0.0 && min_interaction_ratio <= 1.0)) {
        throw ValidationError("min_interaction_ratio must be in (0,1]");
    }
    std::map<std::string, std::int64_t> delivered;
    std::map<std::string, std::set<std::string>> acted;
    for (const auto& [id, m] : corpus.messages) ++delivered[m.user_id];
    for (const auto& a : corpus.actions) acted[a.user_id].insert(a.message_id);

    FilterReport local;
    std::set<std::string> keep;
    for (const auto& user : corpus.users()) {
        auto d = delivered.find(user);
        if (d == delivered.end() || d->second == 0) {
            local.dropped_no_deliveries.push_back(user);
            continue;
        }
        auto it = acted.find(user);
        const double n_acted = it == acted.end() ? 0.0 : static_cast<double>(it->second.size());
        if (n_acted / static_cast<double>(d->second) >= min_interaction_ratio) {
            keep.insert(user);
            local.retained.push_back(user);
        } else {
            local.dropped_below_ratio.push_back(user);
        }
    }

    Corpus out;
    for (const auto& a : corpus.actions) {
        if (keep.count(a.user_id)) out.actions.push_back(a);
    }
    for (const auto& [id, m] : corpus.messages) {
        if (keep.count(m.user_id)) out.messages.emplace(id, m);
    }
    for (const auto& [key, s] : corpus.calendar) {
        if (keep.count(key.first)) out.calendar.emplace(key, s);
    }
    if (report) *report = std::move(local);
    return out;
}

// ---------------------------------------------------------------------------

CorpusIndex::CorpusIndex(const Corpus& corpus) : corpus_(&corpus) {
    message_ids_.reserve(corpus.messages.size());
    metas_.reserve(corpus.messages.size());
    for (const auto& [id, m] : corpus.messages) {
        message_lookup_.emplace(id, message_ids_.size());
        message_ids_.push_back(id);
        metas_.push_back(&m);
    }
    users_ = corpus.users();
    for (std::size_t u = 0; u < users_.size(); ++u) user_lookup_.emplace(users_[u], u);

    actions_of_.resize(message_ids_.size());
    for (std::size_t i = 0; i < corpus.actions.size(); ++i) {
        auto it = message_lookup_.find(corpus.actions[i].message_id);
        if (it == message_lookup_.end()) {
            throw IntegrityError("action references unknown message \"" + corpus.actions[i].message_id + "\"");
        }
        actions_of_[it->second].push_back(i);
    }

    user_of_.resize(message_ids_.size());
    deliveries_.resize(users_.size());
    delivery_times_.resize(users_.size());
    first_action_times_.resize(users_.size());
    for (std::size_t m = 0; m < message_ids_.size(); ++m) {
        const std::size_t u = user_lookup_.at(metas_[m]->user_id);
        user_of_[m] = u;
        deliveries_[u].push_back(m);
        delivery_times_[u].push_back(metas_[m]->delivery_time);
        if (auto t = first_action_time(m)) first_action_times_[u].push_back(*t);
    }
    for (std::size_t u = 0; u < users_.size(); ++u) {
        auto& d = deliveries_[u];
        std::sort(d.begin(), d.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(metas_[a]->delivery_time, message_ids_[a]) <
                   std::tie(metas_[b]->delivery_time, message_ids_[b]);
        });
        std::sort(delivery_times_[u].begin(), delivery_times_[u].end());
        std::sort(first_action_times_[u].begin(), first_action_times_[u].end());
    }
}

std::size_t CorpusIndex::message_index(std::string_view message_id) const {
    auto it = message_lookup_.find(message_id);
    if (it == message_lookup_.end()) throw LookupError("unknown message \"" + std::string(message_id) + "\"");
    return it->second;
}

std::optional<std::size_t> CorpusIndex::find_message(std::string_view message_id) const {
    auto it = message_lookup_.find(message_id);
    if (it == message_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> CorpusIndex::first_read_action(std::size_t m) const {
    for (std::size_t i : actions_of_[m]) {
        if (corpus_->actions[i].action == ActionType::Read) return i;
    }
    return std::nullopt;
}

std::optional<Timestamp> CorpusIndex::first_action_time(std::size_t m) const {
    const auto& acts = actions_of_[m];
    if (acts.empty()) return std::nullopt;
    return corpus_->actions[acts.front()].timestamp;
}

std::size_t CorpusIndex::user_index(std::string_view user) const {
    auto it = user_lookup_.find(user);
    if (it == user_lookup_.end()) throw LookupError("unknown user \"" + std::string(user) + "\"");
    return it->second;
}

std::int64_t CorpusIndex::unhandled_for_user(std::size_t u, Timestamp t) const {
    const auto& dt = delivery_times_[u];
    const auto& ft = first_action_times_[u];
    const auto delivered = std::lower_bound(dt.begin(), dt.end(), t) - dt.begin();
    const auto handled = std::lower_bound(ft.begin(), ft.end(), t) - ft.begin();
    return static_cast<std::int64_t>(delivered - handled);
}

std::int64_t CorpusIndex::unhandled_at(std::size_t m, Timestamp t) const {
    std::int64_t n = unhandled_for_user(user_of_[m], t);
    const auto first = first_action_time(m);
    if (metas_[m]->delivery_time < t && !(first && *first < t)) --n;
    return n;
}

std::int64_t CorpusIndex::delivered_between(std::size_t m, Timestamp after, Timestamp before) const {
    if (before <= after + 1) return 0;
    const auto& dt = delivery_times_[user_of_[m]];
    const auto lo = std::upper_bound(dt.begin(), dt.end(), after);
    const auto hi = std::lower_bound(dt.begin(), dt.end(), before);
    std::int64_t n = hi > lo ? hi - lo : 0;
    const Timestamp own = metas_[m]->delivery_time;
    if (own > after && own < before) --n;
    return n;
}

const CalendarSlot* CorpusIndex::calendar_slot(std::string_view user, Timestamp t) const {
    const Timestamp start = t - ((t % 3600) + 3600) % 3600;
    auto it = corpus_->calendar.find(CalendarKey{std::string(user), start});
    return it == corpus_->calendar.end() ? nullptr : &it->second;
}

}  // namespace deferral
