#include <doctest.h>

#include <set>
#include <sstream>

#include "builders.hpp"
#include "deferral/error.hpp"
#include "deferral/featurizer.hpp"
#include "deferral/synthgen.hpp"

using namespace deferral;
using deferral::testing::CorpusBuilder;
using deferral::testing::Labelled;

namespace {

constexpr Timestamp kTuesdayMay8At14 = 1525788000;  // 2018-05-08 14:00:00 UTC

double feature(const FeatureVector& f, std::string_view name) { return f[feature_index(name)]; }

FeatureVector features_of(const Labelled& l, const std::string& id) {
    return extract_features(l.index.message_index(id), l.labels, l.sessions, l.index, infer_profiles(l.index));
}

// The rows of the published feature table, in its spelling.
const std::vector<std::string_view> kTableRows = {
    "NumRespone",  "NumFlag",       "NumMarkUnRead",    "NumOpenAtt",          "NumLinkClK",
    "NumMove",     "NumDelete",     "NumSearch",        "UniqueBodyLength",    "isBulkMessage",
    "isInThread",  "numRecipients", "isHuman",          "isSenderFromSameOrg", "isKnownSender",
    "isImportantSender", "MailboxSize", "ManagementStyle", "NumMessages",      "NumMessagesSLTS",
    "NumMeetings", "NumMeetingsOrg", "TimeBusy",        "TimeFree",            "TimeTentative",
    "TimeOOO",     "HourOfDay",     "DayOfWeek",        "DayOfMonth",          "Month",
};

}  // namespace

TEST_CASE("every published feature row maps to exactly one field") {
    const auto& cols = feature_columns();
    CHECK(cols.size() == kNumFeatures);
    CHECK(kNumFeatures == 33);
    std::set<std::string_view> names;
    for (const auto& c : cols) names.insert(c.name);
    CHECK(names.size() == cols.size());

    for (std::string_view row : kTableRows) {
        std::size_t fields = 0;
        for (const auto& c : cols) fields += c.table_row == row;
        // The style row is one-hot encoded over three columns; it is one field before encoding.
        CHECK_MESSAGE(fields == (row == "ManagementStyle" ? 3u : 1u), row);
    }
    for (const auto& c : cols) {
        const bool known = c.table_row.empty() ||
                           std::find(kTableRows.begin(), kTableRows.end(), c.table_row) != kTableRows.end();
        CHECK_MESSAGE(known, c.name);
    }
    CHECK(feature_index("calendar_present") == kNumFeatures - 1);
    CHECK_THROWS_AS(feature_index("Nope"), LookupError);
}

TEST_CASE("read-session action counts") {
    CorpusBuilder b;
    b.message("m1");
    b.act("m1", ActionType::Read, 0).act("m1", ActionType::Flag, 10).act("m1", ActionType::Reply, 5000);
    const Labelled l(b.build());
    const FeatureVector f = features_of(l, "m1");
    CHECK(feature(f, "NumFlag") == 1);
    CHECK(feature(f, "NumResponse") == 0);
    CHECK(feature(f, "NumMove") == 0);
}

TEST_CASE("time features decompose the first-read timestamp in UTC") {
    CorpusBuilder b;
    b.message("m1", "u", kTuesdayMay8At14 - 100);
    b.act("m1", ActionType::Read, kTuesdayMay8At14);
    const Labelled l(b.build());
    const FeatureVector f = features_of(l, "m1");
    CHECK(feature(f, "HourOfDay") == 14);
    CHECK(feature(f, "DayOfWeek") == 1);
    CHECK(feature(f, "DayOfMonth") == 8);
    CHECK(feature(f, "Month") == 5);
}

TEST_CASE("calendar features come from the slot holding the read, zeros otherwise") {
    CorpusBuilder b;
    b.message("m1", "u", 3600);
    b.message("m2", "u", 3600);
    auto& s = b.slot("u", 3600);
    s.num_meetings = 2;
    s.num_meetings_organized = 1;
    s.frac_busy = 0.5;
    s.frac_free = 0.5;
    b.act("m1", ActionType::Read, 3700).act("m2", ActionType::Read, 9000);
    const Labelled l(b.build());
    const FeatureVector f1 = features_of(l, "m1");
    CHECK(feature(f1, "NumMeetings") == 2);
    CHECK(feature(f1, "NumMeetingsOrg") == 1);
    CHECK(feature(f1, "TimeBusy") == 0.5);
    CHECK(feature(f1, "calendar_present") == 1);
    const FeatureVector f2 = features_of(l, "m2");
    CHECK(feature(f2, "NumMeetings") == 0);
    CHECK(feature(f2, "TimeFree") == 0);
    CHECK(feature(f2, "calendar_present") == 0);
}

TEST_CASE("workload features") {
    CorpusBuilder b;
    b.message("a", "u", 0);
    b.message("b", "u", 100);
    b.message("c", "u", 5000);
    b.message("d", "u", 6000);
    b.act("a", ActionType::Read, 200);       // session 0 ends at 200
    b.act("d", ActionType::Read, 10000);     // session 1
    const Labelled l(b.build());
    const FeatureVector f = features_of(l, "d");
    CHECK(feature(f, "NumMessages") == 2);      // b and c are unhandled
    CHECK(feature(f, "NumMessagesSLTS") == 1);  // c arrived after session 0 ended; d itself excluded
}

TEST_CASE("NumMessages equals the generator's unhandled count") {
    SynthConfig cfg = calibrated_config();
    cfg.num_users = 20;
    cfg.days = 4;
    const SynthResult r = generate(cfg);
    const Labelled l(r.corpus);
    const auto profiles = infer_profiles(l.index);
    for (const auto& [id, t] : r.truth) {
        const FeatureVector f = extract_features(l.index.message_index(id), l.labels, l.sessions, l.index, profiles);
        CHECK(feature(f, "NumMessages") == static_cast<double>(t.unhandled_at_read));
    }
}

TEST_CASE("never-read messages cannot be featurized") {
    CorpusBuilder b;
    b.message("m1");
    const Labelled l(b.build());
    CHECK_THROWS_WITH_AS(features_of(l, "m1"), doctest::Contains("no first read"), DataError);
}

TEST_CASE("mailbox buckets and management styles") {
    CHECK(mailbox_size_bucket(9) == 0);
    CHECK(mailbox_size_bucket(10) == 1);
    CHECK(mailbox_size_bucket(24) == 1);
    CHECK(mailbox_size_bucket(50) == 2);
    CHECK(mailbox_size_bucket(100) == 3);

    CorpusBuilder b;
    for (int i = 0; i < 50; ++i) {
        const std::string id = std::to_string(i);
        b.message("z" + id, "zero", i);
        b.act("z" + id, ActionType::Read, 1000 + i).act("z" + id, ActionType::Move, 1100 + i);
        b.message("p" + id, "piler", i);
        if (i % 2 == 0) b.act("p" + id, ActionType::Read, 1000 + i);
        b.message("r" + id, "reader", i);
        b.act("r" + id, ActionType::Read, 1000 + i);
    }
    const Corpus c = b.build();
    const CorpusIndex index(c);
    const auto zero = infer_profile("zero", index);
    CHECK(zero.mailbox_size_bucket == 2);
    CHECK(zero.management_style == ManagementStyle::ZeroInbox);
    CHECK(infer_profile("piler", index).management_style == ManagementStyle::Piler);
    CHECK(infer_profile("reader", index).management_style == ManagementStyle::ZeroUnread);
    CHECK_THROWS_AS(infer_profile("nobody", index), LookupError);
}

TEST_CASE("features use nothing after the first-read session") {
    SynthConfig cfg = calibrated_config();
    cfg.num_users = 10;
    cfg.days = 4;
    const SynthResult r = generate(cfg);
    const Labelled full(r.corpus);
    const auto profiles = infer_profiles(full.index);
    std::size_t checked = 0;
    for (const auto& [id, d] : full.labels) {
        if (++checked % 25 != 0) continue;
        const auto& meta = r.corpus.messages.at(id);
        const Timestamp end = full.sessions.of_user(meta.user_id)[*d.first_read_session].end_ts;
        Corpus cut = r.corpus;
        std::erase_if(cut.actions, [&](const ActionRecord& a) { return a.timestamp > end; });
        const Labelled truncated(cut);
        const FeatureVector a =
            extract_features(full.index.message_index(id), full.labels, full.sessions, full.index, profiles);
        const FeatureVector b = extract_features(truncated.index.message_index(id), truncated.labels,
                                                 truncated.sessions, truncated.index, profiles);
        CHECK(a == b);
    }
}

TEST_CASE("dataset weights, shape and column removal") {
    CorpusBuilder b;
    for (int i = 0; i < 5; ++i) {
        const std::string id = "m" + std::to_string(i);
        b.message(id, "u", i);
        b.act(id, ActionType::Read, 100 + i);
    }
    const Labelled l(b.build());
    const auto profiles = infer_profiles(l.index);
    const std::vector<std::string> cohort{"m0", "m1", "m2", "m3", "m4"};
    const std::vector<bool> positive{true, true, false, false, false};
    const Dataset d = build_dataset(cohort, positive, l.labels, l.sessions, l.index, profiles, 10.0);
    CHECK(d.weights == std::vector<double>{10, 10, 1, 1, 1});
    CHECK(d.y == std::vector<std::uint8_t>{1, 1, 0, 0, 0});
    CHECK(d.rows() == 5);
    CHECK(d.cols() == kNumFeatures);
    CHECK(d.x.size() == 5 * kNumFeatures);
    for (std::size_t r = 0; r < d.rows(); ++r) {
        CHECK(d.at(r, feature_index("ManagementStyle_Piler")) + d.at(r, feature_index("ManagementStyle_ZeroInbox")) +
                  d.at(r, feature_index("ManagementStyle_ZeroUnread")) ==
              1.0);
    }

    const Dataset ones = build_dataset(cohort, positive, l.labels, l.sessions, l.index, profiles, 1.0);
    CHECK(ones.weights == std::vector<double>(5, 1.0));
    CHECK_THROWS_AS(build_dataset({}, {}, l.labels, l.sessions, l.index, profiles), DataError);
    CHECK_THROWS_AS(build_dataset(cohort, positive, l.labels, l.sessions, l.index, profiles, 0.0), ValidationError);

    const Dataset fewer = d.without_columns({"NumResponse"});
    CHECK(fewer.cols() == kNumFeatures - 1);
    CHECK(std::find(fewer.feature_names.begin(), fewer.feature_names.end(), "NumResponse") ==
          fewer.feature_names.end());
    CHECK_THROWS_AS(d.without_columns({"Bogus"}), LookupError);
}

TEST_CASE("feature CSVs round-trip and are deterministic") {
    SynthConfig cfg = calibrated_config();
    cfg.num_users = 10;
    cfg.days = 3;
    const SynthResult r = generate(cfg);
    const Labelled l(r.corpus);
    const auto profiles = infer_profiles(l.index);
    std::vector<std::string> cohort;
    std::vector<bool> positive;
    for (const auto& [id, d] : l.labels) {
        cohort.push_back(id);
        positive.push_back(d.label == Label::Deferred);
    }
    const Dataset d = build_dataset(cohort, positive, l.labels, l.sessions, l.index, profiles);
    std::ostringstream f, y, w;
    write_features_csv(f, d);
    write_labels_csv(y, d);
    write_weights_csv(w, d);
    std::istringstream fi(f.str()), yi(y.str()), wi(w.str());
    const Dataset back = read_dataset(fi, yi, wi);
    CHECK(back.x == d.x);
    CHECK(back.y == d.y);
    CHECK(back.weights == d.weights);
    CHECK(back.feature_names == d.feature_names);
    CHECK(back.message_ids == d.message_ids);

    const Dataset again = build_dataset(cohort, positive, l.labels, l.sessions, l.index, profiles);
    std::ostringstream f2;
    write_features_csv(f2, again);
    CHECK(f2.str() == f.str());
}
