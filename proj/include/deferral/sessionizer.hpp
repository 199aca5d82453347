#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "deferral/log_model.hpp"

namespace deferral {

inline constexpr Timestamp kDefaultGapSecs = 600;

struct SessionId {
    std::string user_id;
    std::int32_t index{0};

    friend auto operator<=>(const SessionId&, const SessionId&) = default;
};

struct Session {
    SessionId id;
    Timestamp start_ts{0};
    Timestamp end_ts{0};
    /// Indices into Corpus::actions, in timestamp order.
    std::vector<std::size_t> actions;
};

/// Sessions of every user plus the reverse action -> session-ordinal map.
struct Sessions {
    std::map<std::string, std::vector<Session>> by_user;
    /// Session ordinal (within its user) of each entry of Corpus::actions.
    std::vector<std::int32_t> ordinal_of_action;
    Timestamp gap_threshold{kDefaultGapSecs};

    const std::vector<Session>& of_user(const std::string& user) const;
    std::size_t total() const;
};

/// Splits each user's actions wherever ts - previous_ts > gap_threshold_secs.
Sessions sessionize(const Corpus& corpus, Timestamp gap_threshold_secs = kDefaultGapSecs);

/// Reference definition: the session holds the first Read of at least `min_first_reads` messages.
bool is_triage_session(const Session& session, const CorpusIndex& index,
                       const Sessions& sessions, std::size_t min_first_reads = 1);

/// Ordinal of the session holding the earliest Read of message m, if it was ever read.
std::optional<std::int32_t> first_read_session(std::size_t m, const CorpusIndex& index,
                                               const Sessions& sessions);

/// sessions.jsonl: {"user":str,"idx":int,"start":int,"end":int,"n_actions":int}
void write_sessions(std::ostream& out, const Sessions& sessions);

/// Rebuilds Sessions from sessions.jsonl against the corpus it was computed on.
/// Throws ParseError / IntegrityError when the file does not cover the corpus exactly.
Sessions read_sessions(std::istream& in, const Corpus& corpus);

}  // namespace deferral
