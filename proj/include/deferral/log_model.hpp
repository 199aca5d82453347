#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deferral {

using Timestamp = std::int64_t;  // seconds since epoch, UTC

/// Logged user verbs. Enumerator order is the tie-break order for equal timestamps.
enum class ActionType : std::uint8_t {
    Read,
    Reply,
    ReplyAll,
    Forward,
    Flag,
    FlagComplete,
    MarkAsUnread,
    Delete,
    Move,
    LinkClicked,
    OpenedAnAttachment,
    SearchRetrieved,
};

inline constexpr std::size_t kNumActionTypes = 12;

inline constexpr std::array<ActionType, kNumActionTypes> kAllActionTypes = {
    ActionType::Read,         ActionType::Reply,        ActionType::ReplyAll,
    ActionType::Forward,      ActionType::Flag,         ActionType::FlagComplete,
    ActionType::MarkAsUnread, ActionType::Delete,       ActionType::Move,
    ActionType::LinkClicked,  ActionType::OpenedAnAttachment, ActionType::SearchRetrieved,
};

/// The seven actions covered by the action-probability tables, in table column order.
inline constexpr std::array<ActionType, 7> kStrategyActions = {
    ActionType::Delete,       ActionType::Flag, ActionType::FlagComplete,       ActionType::LinkClicked,
    ActionType::MarkAsUnread, ActionType::Move, ActionType::OpenedAnAttachment,
};

/// Reply, ReplyAll and Forward.
constexpr bool is_strong_action(ActionType a) noexcept {
    return a == ActionType::Reply || a == ActionType::ReplyAll || a == ActionType::Forward;
}

/// Flag or MarkAsUnread: the explicit deferral signals.
constexpr bool is_explicit_signal(ActionType a) noexcept {
    return a == ActionType::Flag || a == ActionType::MarkAsUnread;
}

std::string_view to_string(ActionType a) noexcept;

/// Mailbox upkeep archetypes.
enum class ManagementStyle : std::uint8_t { Piler, ZeroInbox, ZeroUnread };

std::string_view to_string(ManagementStyle s) noexcept;
/// Throws ValidationError on an unknown verb.
ActionType parse_action_type(std::string_view verb);

struct ActionRecord {
    std::string user_id;
    std::string message_id;
    ActionType action{ActionType::Read};
    Timestamp timestamp{0};

    friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

/// Canonical corpus order: (user_id, timestamp, message_id, action).
bool action_order(const ActionRecord& a, const ActionRecord& b) noexcept;

struct MessageMeta {
    std::string message_id;
    std::string user_id;  // recipient mailbox owner
    Timestamp delivery_time{0};
    std::int64_t unique_body_length{0};
    std::int64_t num_recipients{1};
    bool is_bulk{false};
    bool is_in_thread{false};
    bool is_human_sender{false};
    bool is_same_org{false};
    bool is_known_sender{false};
    bool is_important_sender{false};
    bool is_action_request{false};
    bool is_reply_request{false};

    friend bool operator==(const MessageMeta&, const MessageMeta&) = default;
};

struct CalendarSlot {
    std::string user_id;
    Timestamp slot_start{0};  // hour-aligned
    std::int64_t num_meetings{0};
    std::int64_t num_meetings_organized{0};
    double frac_busy{0.0};
    double frac_free{1.0};
    double frac_tentative{0.0};
    double frac_ooo{0.0};

    friend bool operator==(const CalendarSlot&, const CalendarSlot&) = default;
};

using CalendarKey = std::pair<std::string, Timestamp>;

struct Corpus {
    std::vector<ActionRecord> actions;  // canonical order
    std::map<std::string, MessageMeta> messages;
    std::map<CalendarKey, CalendarSlot> calendar;

    /// Users that own at least one message, action or calendar slot, sorted.
    std::vector<std::string> users() const;

    /// Sorts actions into canonical order and checks every invariant.
    /// Throws IntegrityError / ValidationError.
    void normalize();

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

void validate(const MessageMeta& m);
void validate(const CalendarSlot& s);

/// Parses the three line-delimited JSON streams. Empty lines are ignored.
/// Throws ParseError (with 1-based line number), IntegrityError or ValidationError.
Corpus parse_corpus(std::istream& actions, std::istream& messages, std::istream& calendar);

void write_actions(std::ostream& out, const Corpus& corpus);
void write_messages(std::ostream& out, const Corpus& corpus);
void write_calendar(std::ostream& out, const Corpus& corpus);

inline constexpr const char* kActionsFile = "actions.jsonl";
inline constexpr const char* kMessagesFile = "messages.jsonl";
inline constexpr const char* kCalendarFile = "calendar.jsonl";

/// Reads actions.jsonl, messages.jsonl and (optionally) calendar.jsonl from `dir`.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

struct FilterReport {
    std::vector<std::string> retained;
    std::vector<std::string> dropped_below_ratio;
    std::vector<std::string> dropped_no_deliveries;
};

/// Keeps users whose acted-on / delivered message ratio is >= min_interaction_ratio.
Corpus filter_active_users(const Corpus& corpus, double min_interaction_ratio = 0.01,
                           FilterReport* report = nullptr);

/// Dense lookup structures shared by the analysis modules. Holds a reference to
/// the corpus, which must outlive the index.
class CorpusIndex {
public:
    explicit CorpusIndex(const Corpus& corpus);

    const Corpus& corpus() const noexcept { return *corpus_; }

    std::size_t num_messages() const noexcept { return message_ids_.size(); }
    const std::string& message_id(std::size_t m) const { return message_ids_[m]; }
    const MessageMeta& meta(std::size_t m) const { return *metas_[m]; }
    /// Throws LookupError for unknown ids.
    std::size_t message_index(std::string_view message_id) const;
    std::optional<std::size_t> find_message(std::string_view message_id) const;

    /// Indices into corpus().actions for message m, in canonical order.
    const std::vector<std::size_t>& actions_of(std::size_t m) const { return actions_of_[m]; }
    /// Index into corpus().actions of the earliest Read of m, if any.
    std::optional<std::size_t> first_read_action(std::size_t m) const;
    /// Timestamp of the earliest action on m, if any.
    std::optional<Timestamp> first_action_time(std::size_t m) const;

    const std::vector<std::string>& users() const noexcept { return users_; }
    std::size_t user_index(std::string_view user) const;
    std::size_t user_of(std::size_t m) const { return user_of_[m]; }
    /// Message indices delivered to user u, ordered by (delivery_time, message_id).
    const std::vector<std::size_t>& deliveries(std::size_t u) const { return deliveries_[u]; }

    /// Messages of the owner of m (excluding m) delivered strictly before t that
    /// have no action strictly before t.
    std::int64_t unhandled_at(std::size_t m, Timestamp t) const;
    /// Messages of user u delivered strictly before t that have no action strictly before t.
    std::int64_t unhandled_for_user(std::size_t u, Timestamp t) const;
    /// Messages of the owner of m (excluding m) delivered in the open interval (after, before).
    std::int64_t delivered_between(std::size_t m, Timestamp after, Timestamp before) const;

    const CalendarSlot* calendar_slot(std::string_view user, Timestamp t) const;

private:
    const Corpus* corpus_;
    std::vector<std::string> message_ids_;
    std::vector<const MessageMeta*> metas_;
    std::map<std::string, std::size_t, std::less<>> message_lookup_;
    std::vector<std::vector<std::size_t>> actions_of_;
    std::vector<std::string> users_;
    std::map<std::string, std::size_t, std::less<>> user_lookup_;
    std::vector<std::size_t> user_of_;
    std::vector<std::vector<std::size_t>> deliveries_;
    std::vector<std::vector<Timestamp>> delivery_times_;      // sorted, per user
    std::vector<std::vector<Timestamp>> first_action_times_;  // sorted, per user
};

}  // namespace deferral
