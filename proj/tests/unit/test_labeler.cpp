#include <doctest.h>

#include <sstream>

#include "builders.hpp"
#include "deferral/error.hpp"
#include "deferral/labeler.hpp"
#include "oracles.hpp"

using namespace deferral;
using deferral::testing::CorpusBuilder;
using deferral::testing::Labelled;

namespace {

// Puts one action in each of sessions 0..n by spacing them an hour apart.
constexpr Timestamp session(int k) { return 3600 * k; }

}  // namespace

TEST_CASE("strong action in a later session is Deferred") {
    CorpusBuilder b;
    b.message("m1");
    b.message("pad");
    for (int k = 0; k <= 5; ++k) b.act("pad", ActionType::Move, session(k) + 1);
    b.act("m1", ActionType::Read, session(2)).act("m1", ActionType::Reply, session(5));
    const Labelled l(b.build());
    const auto& d = l.labels.at("m1");
    CHECK(d.label == Label::Deferred);
    CHECK(d.first_read_session == 2);
    CHECK(d.first_strong_action_session == 5);
}

TEST_CASE("same-session strong action is NonDeferred") {
    CorpusBuilder b;
    b.message("m1");
    b.act("m1", ActionType::Read, 0).act("m1", ActionType::ReplyAll, 300);
    const Labelled l(b.build());
    CHECK(l.labels.at("m1").label == Label::NonDeferred);
}

TEST_CASE("untouched messages are NeverRead") {
    CorpusBuilder b;
    b.message("m1");
    const Labelled l(b.build());
    CHECK(l.labels.at("m1").label == Label::NeverRead);
    CHECK_FALSE(l.labels.at("m1").first_read_session.has_value());
    CHECK_THROWS_AS(label_message("nope", l.sessions, l.index), LookupError);
}

TEST_CASE("empty corpus labels nothing") {
    const Labelled l(Corpus{});
    CHECK(l.labels.empty());
}

TEST_CASE("immediate replies give zero Deferred labels") {
    CorpusBuilder b;
    for (int i = 0; i < 30; ++i) {
        const std::string id = "m" + std::to_string(i);
        b.message(id, "u", session(i));
        b.act(id, ActionType::Read, session(i) + 10).act(id, ActionType::Reply, session(i) + 20);
    }
    const Labelled l(b.build());
    for (const auto& [id, d] : l.labels) CHECK(d.label == Label::NonDeferred);
}

TEST_CASE("strong actions without a prior read are counted anomalies") {
    CorpusBuilder b;
    b.message("before");
    b.message("never");
    b.act("before", ActionType::Reply, 0).act("before", ActionType::Read, session(1));
    b.act("never", ActionType::Forward, session(2));
    const Corpus c = b.build();
    const CorpusIndex index(c);
    const Sessions s = sessionize(c);
    LabelAnomalies anomalies;
    const LabelMap labels = label_corpus(index, s, {}, &anomalies);
    CHECK(labels.at("before").label == Label::NonDeferred);
    CHECK(labels.at("never").label == Label::NeverRead);
    CHECK(anomalies.strong_before_read == 1);
    CHECK(anomalies.strong_without_read == 1);
}

TEST_CASE("explicit signal window") {
    CorpusBuilder b;
    b.message("late_flag");
    b.message("read_flag");
    b.message("complete_only");
    b.act("late_flag", ActionType::Read, 0)
        .act("late_flag", ActionType::Flag, session(1))
        .act("late_flag", ActionType::Reply, session(2));
    b.act("read_flag", ActionType::Read, 10).act("read_flag", ActionType::MarkAsUnread, 20);
    b.act("complete_only", ActionType::Read, 30).act("complete_only", ActionType::FlagComplete, 40);
    const Corpus c = b.build();

    const testing::Labelled read_window(c);
    CHECK_FALSE(read_window.labels.at("late_flag").explicit_signal);
    CHECK(read_window.labels.at("read_flag").explicit_signal);
    CHECK_FALSE(read_window.labels.at("complete_only").explicit_signal);

    const testing::Labelled pre_strong(c, kDefaultGapSecs, {SignalWindow::PreStrong});
    CHECK(pre_strong.labels.at("late_flag").explicit_signal);
    CHECK(pre_strong.labels.at("late_flag").label == Label::Deferred);
}

TEST_CASE("explicit signal implies a Flag or MarkAsUnread inside the read session bounds") {
    const Corpus c = testing::random_corpus(11, 3000);
    const Labelled l(c);
    for (const auto& [id, d] : l.labels) {
        if (!d.explicit_signal) continue;
        const auto& sess = l.sessions.of_user(c.messages.at(id).user_id)[*d.first_read_session];
        bool found = false;
        for (const auto& a : c.actions) {
            found |= a.message_id == id && is_explicit_signal(a.action) && a.timestamp >= sess.start_ts &&
                     a.timestamp <= sess.end_ts;
        }
        CHECK(found);
    }
}

TEST_CASE("labels match the brute-force scan on random corpora") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const Corpus c = testing::random_corpus(seed, 400 * seed);
        const Labelled l(c);
        CHECK(l.labels == testing::brute_force_labels(c));
    }
}

TEST_CASE("labels are invariant to timestamp shifts and user renaming") {
    const Corpus c = testing::random_corpus(5, 2000);
    const Labelled base(c);

    Corpus shifted = c;
    for (auto& a : shifted.actions) a.timestamp += 987654;
    for (auto& [id, m] : shifted.messages) m.delivery_time += 987654;
    shifted.normalize();
    CHECK(Labelled(shifted).labels == base.labels);

    Corpus renamed = c;
    auto rename = [](const std::string& u) { return "z" + std::to_string(99 - std::stoi(u.substr(1))); };
    for (auto& a : renamed.actions) a.user_id = rename(a.user_id);
    for (auto& [id, m] : renamed.messages) m.user_id = rename(m.user_id);
    renamed.normalize();
    CHECK(Labelled(renamed).labels == base.labels);
}

TEST_CASE("labels equal completed deferral intents on generated corpora") {
    SynthConfig cfg = calibrated_config();
    cfg.num_users = 30;
    cfg.days = 5;
    const SynthResult r = generate(cfg);
    const Labelled l(r.corpus);
    std::size_t deferred = 0;
    for (const auto& [id, t] : r.truth) {
        const Label got = l.labels.at(id).label;
        CHECK(got == testing::truth_label(t));
        deferred += got == Label::Deferred;
    }
    CHECK(deferred > 0);
}

TEST_CASE("labels.jsonl round-trips") {
    const Labelled l(testing::random_corpus(2, 500));
    std::ostringstream out;
    write_labels(out, l.labels);
    std::istringstream in(out.str());
    CHECK(read_labels(in) == l.labels);
    CHECK(out.str().find(R"("read_sess":null)") != std::string::npos);
}
