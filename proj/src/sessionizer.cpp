#include "deferral/sessionizer.hpp"

#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "deferral/error.hpp"

namespace deferral {

const std::vector<Session>& Sessions::of_user(const std::string& user) const {
    static const std::vector<Session> kEmpty;
    auto it = by_user.find(user);
    return it == by_user.end() ? kEmpty : it->second;
}

std::size_t Sessions::total() const {
    std::size_t n = 0;
    for (const auto& [user, list] : by_user) n += list.size();
    return n;
}

Sessions sessionize(const Corpus& corpus, Timestamp gap_threshold_secs) {
    if (gap_threshold_secs <= 0) throw ValidationError("gap threshold must be positive");
    Sessions out;
    out.gap_threshold = gap_threshold_secs;
    out.ordinal_of_action.assign(corpus.actions.size(), -1);
    for (const auto& user : corpus.users()) out.by_user[user];

    std::vector<Session>* current_user = nullptr;
    const std::string* current_id = nullptr;
    for (std::size_t i = 0; i < corpus.actions.size(); ++i) {
        const auto& a = corpus.actions[i];
        if (current_id == nullptr || *current_id != a.user_id) {
            current_user = &out.by_user[a.user_id];
            current_id = &a.user_id;
            current_user->push_back(Session{{a.user_id, 0}, a.timestamp, a.timestamp, {}});
        } else if (a.timestamp - current_user->back().end_ts > gap_threshold_secs) {
            const auto next = static_cast<std::int32_t>(current_user->size());
            current_user->push_back(Session{{a.user_id, next}, a.timestamp, a.timestamp, {}});
        }
        auto& s = current_user->back();
        s.end_ts = a.timestamp;
        s.actions.push_back(i);
        out.ordinal_of_action[i] = s.id.index;
    }
    return out;
}

std::optional<std::int32_t> first_read_session(std::size_t m, const CorpusIndex& index,
                                               const Sessions& sessions) {
    const auto& actions = index.corpus().actions;
    for (std::size_t i : index.actions_of(m)) {
        if (actions[i].action == ActionType::Read) return sessions.ordinal_of_action[i];
    }
    return std::nullopt;
}

bool is_triage_session(const Session& session, const CorpusIndex& index, const Sessions& /*sessions*/,
                       std::size_t min_first_reads) {
    const auto& actions = index.corpus().actions;
    std::size_t first_reads = 0;
    for (std::size_t i : session.actions) {
        if (actions[i].action != ActionType::Read) continue;
        const std::size_t m = index.message_index(actions[i].message_id);
        // The first Read of m is the earliest Read in its canonical action list.
        for (std::size_t j : index.actions_of(m)) {
            if (actions[j].action == ActionType::Read) {
                if (j == i) ++first_reads;
                break;
            }
        }
        if (first_reads >= min_first_reads) return true;
    }
    return min_first_reads == 0;
}

void write_sessions(std::ostream& out, const Sessions& sessions) {
    for (const auto& [user, list] : sessions.by_user) {
        for (const auto& s : list) {
            nlohmann::ordered_json j;
            j["user"] = user;
            j["idx"] = s.id.index;
            j["start"] = s.start_ts;
            j["end"] = s.end_ts;
            j["n_actions"] = s.actions.size();
            out << j.dump() << '\n';
        }
    }
}

Sessions read_sessions(std::istream& in, const Corpus& corpus) {
    struct Row {
        std::int32_t idx;
        Timestamp start, end;
        std::size_t n;
    };
    std::map<std::string, std::vector<Row>> rows;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        try {
            auto j = nlohmann::json::parse(text);
            rows[j.at("user").get<std::string>()].push_back(
                Row{j.at("idx").get<std::int32_t>(), j.at("start").get<Timestamp>(), j.at("end").get<Timestamp>(),
                    j.at("n_actions").get<std::size_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("sessions.jsonl", line, e.what());
        }
    }

    Sessions out;
    out.ordinal_of_action.assign(corpus.actions.size(), -1);
    for (const auto& user : corpus.users()) out.by_user[user];
    for (auto& [user, list] : rows) {
        auto& dest = out.by_user[user];
        for (std::size_t k = 0; k < list.size(); ++k) {
            if (list[k].idx != static_cast<std::int32_t>(k)) {
                throw IntegrityError("sessions for user \"" + user + "\" are not numbered 0..n-1 in order");
            }
            dest.push_back(Session{{user, list[k].idx}, list[k].start, list[k].end, {}});
        }
    }
    // Assign each action to the session whose [start, end] covers it.
    std::size_t cursor = 0;
    const std::string* last_user = nullptr;
    for (std::size_t i = 0; i < corpus.actions.size(); ++i) {
        const auto& a = corpus.actions[i];
        if (last_user == nullptr || *last_user != a.user_id) {
            cursor = 0;
            last_user = &a.user_id;
        }
        auto& list = out.by_user[a.user_id];
        while (cursor < list.size() && list[cursor].end_ts < a.timestamp) ++cursor;
        if (cursor == list.size() || list[cursor].start_ts > a.timestamp) {
            throw IntegrityError("action on \"" + a.message_id + "\" at " + std::to_string(a.timestamp) +
                                 " is not covered by any session of user \"" + a.user_id + "\"");
        }
        list[cursor].actions.push_back(i);
        out.ordinal_of_action[i] = list[cursor].id.index;
    }
    for (const auto& [user, list] : rows) {
        const auto& dest = out.by_user[user];
        for (std::size_t k = 0; k < list.size(); ++k) {
            if (dest[k].actions.size() != list[k].n) {
                throw IntegrityError("session " + std::to_string(k) + " of user \"" + user +
                                     "\" covers a different number of actions than recorded");
            }
        }
    }
    return out;
}

}  // namespace deferral
