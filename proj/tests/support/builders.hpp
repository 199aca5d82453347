#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deferral/labeler.hpp"
#include "deferral/log_model.hpp"
#include "deferral/sessionizer.hpp"

namespace deferral::testing {

/// Small hand-built corpora. Messages default to user "u" delivered at t = 0.
class CorpusBuilder {
public:
    MessageMeta& message(const std::string& id, const std::string& user = "u", Timestamp delivered = 0) {
        MessageMeta m;
        m.message_id = id;
        m.user_id = user;
        m.delivery_time = delivered;
        return corpus_.messages[id] = m;
    }

    CorpusBuilder& act(const std::string& msg, ActionType a, Timestamp ts) {
        const auto it = corpus_.messages.find(msg);
        const std::string user = it == corpus_.messages.end() ? "u" : it->second.user_id;
        corpus_.actions.push_back({user, msg, a, ts});
        return *this;
    }

    CalendarSlot& slot(const std::string& user, Timestamp start) {
        CalendarSlot s;
        s.user_id = user;
        s.slot_start = start;
        return corpus_.calendar[{user, start}] = s;
    }

    Corpus build() {
        Corpus c = corpus_;
        c.normalize();
        return c;
    }

private:
    Corpus corpus_;
};

/// A corpus with everything needed by the labelling stages.
struct Labelled {
    Corpus corpus;
    CorpusIndex index;
    Sessions sessions;
    LabelMap labels;

    explicit Labelled(Corpus c, Timestamp gap = kDefaultGapSecs, LabelOptions options = {})
        : corpus(std::move(c)), index(corpus), sessions(sessionize(corpus, gap)),
          labels(label_corpus(index, sessions, options)) {}
    Labelled(const Labelled&) = delete;
    Labelled& operator=(const Labelled&) = delete;
};

}  // namespace deferral::testing
