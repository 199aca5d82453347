#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "builders.hpp"
#include "deferral/error.hpp"
#include "deferral/synthgen.hpp"
#include "oracles.hpp"

using namespace deferral;
using deferral::testing::Labelled;

namespace {

SynthConfig sized(SynthConfig cfg, std::int64_t users, std::int64_t days, std::uint64_t seed = 1) {
    cfg.num_users = users;
    cfg.days = days;
    cfg.seed = seed;
    return cfg;
}

std::string serialize(const SynthResult& r) {
    std::ostringstream out;
    write_actions(out, r.corpus);
    write_messages(out, r.corpus);
    write_calendar(out, r.corpus);
    write_truth(out, r.truth);
    return out.str();
}

}  // namespace

TEST_CASE("identical configs give byte-identical output") {
    const SynthConfig cfg = sized(calibrated_config(), 25, 4, 77);
    const std::string a = serialize(generate(cfg));
    CHECK(a == serialize(generate(cfg)));
    CHECK(a != serialize(generate(sized(calibrated_config(), 25, 4, 78))));
}

TEST_CASE("zero base deferral probability gives zero Deferred labels") {
    SynthConfig cfg = sized(calibrated_config(), 40, 5);
    cfg.base_defer_prob = 0.0;
    cfg.workload_slope = 0.5;
    const SynthResult r = generate(cfg);
    const Labelled l(r.corpus);
    for (const auto& [id, d] : l.labels) CHECK(d.label != Label::Deferred);
    for (const auto& [id, t] : r.truth) CHECK(t.intent == Intent::NonDeferred);
}

TEST_CASE("empirical deferral intent matches base_defer_prob within 3 sigma") {
    SynthConfig cfg = sized(calibrated_config(), 1000, 11, 3);
    cfg.base_defer_prob = 0.03;
    cfg.workload_slope = 0.0;
    const SynthResult r = generate(cfg);
    REQUIRE(r.truth.size() >= 100000);
    std::size_t deferred = 0;
    for (const auto& [id, t] : r.truth) deferred += t.intent == Intent::Deferred;
    const double n = static_cast<double>(r.truth.size());
    const double sigma = std::sqrt(0.03 * 0.97 / n);
    CHECK(std::abs(static_cast<double>(deferred) / n - 0.03) <= 3 * sigma);
}

TEST_CASE("label-level deferral equals base probability times completion") {
    const SynthConfig cfg = sized(calibrated_config(), 400, 10, 9);
    const SynthResult r = generate(cfg);
    const Labelled l(r.corpus);
    std::size_t deferred = 0, labelled = 0;
    for (const auto& [id, d] : l.labels) {
        labelled += d.label != Label::NeverRead;
        deferred += d.label == Label::Deferred;
    }
    const double expected = cfg.base_defer_prob * cfg.completion_prob;
    const double n = static_cast<double>(labelled);
    CHECK(std::abs(static_cast<double>(deferred) / n - expected) <= 3 * std::sqrt(expected * (1 - expected) / n));
}

TEST_CASE("every message is read and completed deferrals finish in a later session") {
    const SynthResult r = generate(sized(calibrated_config(), 60, 6, 2));
    const Labelled l(r.corpus);
    for (const auto& [id, t] : r.truth) {
        const auto& d = l.labels.at(id);
        REQUIRE(d.first_read_session.has_value());
        if (t.intent == Intent::Deferred && t.completed) {
            REQUIRE(d.first_strong_action_session.has_value());
            CHECK(*d.first_strong_action_session > *d.first_read_session);
            CHECK(t.planned_strong_action.has_value());
        }
        if (!t.completed) CHECK_FALSE(d.first_strong_action_session.has_value());
    }
}

TEST_CASE("truth records the unhandled count the index computes") {
    const SynthResult r = generate(sized(calibrated_config(), 30, 5, 4));
    const CorpusIndex index(r.corpus);
    for (const auto& [id, t] : r.truth) {
        const std::size_t m = index.message_index(id);
        const auto read = index.first_read_action(m);
        REQUIRE(read.has_value());
        CHECK(index.unhandled_at(m, r.corpus.actions[*read].timestamp) == t.unhandled_at_read);
    }
}

TEST_CASE("deferral intent rate rises with unhandled count") {
    SynthConfig cfg = sized(calibrated_config(), 400, 10, 5);
    cfg.workload_slope = 0.1;
    const SynthResult r = generate(cfg);
    std::map<int, std::pair<double, double>> buckets;  // log2 bucket -> (deferred, total)
    for (const auto& [id, t] : r.truth) {
        const int b = t.unhandled_at_read <= 0 ? 0 : 1 + static_cast<int>(std::log2(static_cast<double>(t.unhandled_at_read)));
        buckets[b].first += t.intent == Intent::Deferred;
        buckets[b].second += 1;
    }
    double previous = -1.0;
    std::size_t compared = 0;
    for (const auto& [b, counts] : buckets) {
        if (counts.second < 2000) continue;
        const double rate = counts.first / counts.second;
        CHECK(rate >= previous);
        previous = rate;
        ++compared;
    }
    CHECK(compared >= 3);
}

TEST_CASE("config text round-trips and rejects unknown keys") {
    SynthConfig cfg = calibrated_config();
    cfg.seed = 99;
    cfg.workload_slope = 0.25;
    std::ostringstream out;
    write_config(out, cfg);
    std::istringstream in(out.str());
    const SynthConfig back = read_config(in, SynthConfig{});
    std::ostringstream again;
    write_config(again, back);
    CHECK(again.str() == out.str());
    CHECK(serialize(generate(sized(back, 5, 2, 99))) == serialize(generate(sized(cfg, 5, 2, 99))));

    std::istringstream unknown("no_such_key = 1\n");
    CHECK_THROWS_AS(read_config(unknown, cfg), ParseError);
    std::istringstream bad("base_defer_prob = lots\n");
    CHECK_THROWS_AS(read_config(bad, cfg), ParseError);
    std::istringstream partial("# comment\nseed = 5\n");
    CHECK(read_config(partial, cfg).seed == 5);
}

TEST_CASE("invalid configs are rejected") {
    SynthConfig cfg = calibrated_config();
    cfg.base_defer_prob = 1.5;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    cfg = calibrated_config();
    cfg.num_users = 0;
    CHECK_THROWS_AS(generate(cfg), ConfigError);
    CalibrationKnobs knobs;
    knobs.completion_prob = 0.0;
    CHECK_THROWS_AS(calibrated_config(knobs), ConfigError);
}

TEST_CASE("truth.jsonl lines carry msg, intent and completed") {
    GroundTruth truth;
    truth["m1"] = TruthEntry{Intent::Deferred, true, ActionType::Reply, Behavior::DeferredCompleted, 3};
    std::ostringstream out;
    write_truth(out, truth);
    CHECK(out.str() == "{\"msg\":\"m1\",\"intent\":\"Deferred\",\"completed\":true}\n");
}

TEST_CASE("explicit tolerances decide pass and fail") {
    const SynthResult r = generate(sized(calibrated_config(), 300, 10, 8));
    CalibrationCheckOptions o;
    o.num_resamples = 200;
    const std::vector<CalibrationTarget> targets = {
        {"actions_by_session", "Deferred-Read", "Flag", 0.021, 0.005},
        {"actions", "NonDeferred", "MarkAsUnread", 0.011, 0.0005},
        {"actions", "NonDeferred", "MarkAsUnread", 0.5, 0.0005},
    };
    const CalibrationReport report = check_calibration(r.corpus, r.truth, targets, o);
    CHECK(report.entries[0].status == CalibrationStatus::Pass);
    CHECK(report.entries[1].status == CalibrationStatus::Pass);
    CHECK(report.entries[2].status == CalibrationStatus::Fail);
    CHECK_FALSE(report.all_pass());
    CHECK(report.find("actions", "NonDeferred", "MarkAsUnread") == &report.entries[1]);

    std::ostringstream text;
    print_calibration(text, report);
    const std::string s = text.str();
    CHECK(s.find("PASS") != std::string::npos);
    CHECK(s.find("FAIL") != std::string::npos);
    CHECK(s.find("2/3 targets pass") != std::string::npos);
    CHECK(s.find("label/truth disagreements: 0") != std::string::npos);
}

TEST_CASE("published targets cover the named acceptance values") {
    const auto targets = published_targets();
    CHECK(targets.size() == 57);
    auto value = [&](std::string_view table, std::string_view group, std::string_view stat) {
        for (const auto& t : targets) {
            if (t.table == table && t.group == group && t.statistic == stat) return t.value;
        }
        FAIL("missing target");
        return 0.0;
    };
    CHECK(value("properties", "Deferred", "num_recipients") == 3.899);
    CHECK(value("properties", "NonDeferred", "num_recipients") == 7.010);
    CHECK(value("actions", "Deferred", "Flag") == 0.036);
    CHECK(value("actions", "NonDeferred", "Flag") == 0.009);
    CHECK(value("actions", "Deferred", "MarkAsUnread") == 0.053);
    CHECK(value("actions", "NonDeferred", "MarkAsUnread") == 0.011);
    CHECK(value("actions_by_session", "Deferred-Read", "Move") == 0.015);
    CHECK(value("actions_by_session", "Deferred-Revisit", "Move") == 0.086);
    CHECK(value("headline", "all", "deferred_message_fraction") == 0.03);
    CHECK(value("replied", "RepliedTo", "MarkAsUnread") == 0.013);
    CHECK(value("replied", "RepliedTo", "num_recipients") == 3.497);
}
