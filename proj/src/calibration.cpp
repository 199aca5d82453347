#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "deferral/characterizer.hpp"
#include "deferral/error.hpp"
#include "deferral/labeler.hpp"
#include "deferral/sessionizer.hpp"
#include "deferral/synthgen.hpp"

namespace deferral {

namespace {

// Column order of every rate array below follows kStrategyActions.
constexpr ActionRates kDeferredTotal{0.108, 0.036, 0.021, 0.032, 0.053, 0.161, 0.239};
constexpr ActionRates kNonDeferredTotal{0.171, 0.009, 0.006, 0.039, 0.011, 0.090, 0.103};
constexpr ActionRates kDeferredRead{0.004, 0.021, 0.001, 0.017, 0.038, 0.015, 0.139};
constexpr ActionRates kDeferredRevisit{0.054, 0.005, 0.011, 0.014, 0.008, 0.086, 0.096};
constexpr ActionRates kNonDeferredRead{0.121, 0.007, 0.003, 0.034, 0.008, 0.060, 0.087};
constexpr ActionRates kNonDeferredRevisit{0.054, 0.003, 0.003, 0.008, 0.004, 0.0300, 0.027};

struct Properties {
    double recipients, action_request, reply_request, human, known, important;
};
constexpr Properties kDeferredProps{3.899, 0.075, 0.200, 0.849, 0.604, 0.469};
constexpr Properties kNonDeferredProps{7.010, 0.034, 0.100, 0.744, 0.723, 0.403};

constexpr double kRepliedMarkAsUnread = 0.013;
constexpr double kRepliedRecipients = 3.497;
constexpr double kDeferredFraction = 0.03;

constexpr double kThousandth = 0.0005;

std::size_t slot_index(ActionType a) {
    return static_cast<std::size_t>(std::find(kStrategyActions.begin(), kStrategyActions.end(), a) -
                                    kStrategyActions.begin());
}

/// P(action seen at least once) for read rate r, revisit probability q,
/// first-revisit rate v and later-revisit rate l.
double total_rate(double r, double q, double v, double l) {
    return 1.0 - (1.0 - r) * (1.0 - q * (1.0 - (1.0 - v) * (1.0 - l)));
}

double checked(double x, double lo, double hi, const std::string& what) {
    if (!(x >= lo - 1e-12 && x <= hi + 1e-12)) {
        std::ostringstream os;
        os << "calibration infeasible: " << what << " = " << x;
        throw ConfigError(os.str());
    }
    return std::clamp(x, lo, hi);
}

MetadataDist with_properties(MetadataDist m, const Properties& p) {
    m.mean_recipients = p.recipients;
    m.p_action_request = p.action_request;
    m.p_reply_request = p.reply_request;
    m.p_human = p.human;
    m.p_known_sender = p.known;
    m.p_important_sender = p.important;
    return m;
}

}  // namespace

std::string_view to_string(CalibrationStatus s) noexcept {
    switch (s) {
        case CalibrationStatus::Pass: return "PASS";
        case CalibrationStatus::Fail: return "FAIL";
        case CalibrationStatus::InsufficientData: return "INSUFFICIENT";
        case CalibrationStatus::Missing: return "MISSING";
    }
    return "?";
}

std::vector<CalibrationTarget> published_targets() {
    std::vector<CalibrationTarget> t;
    t.push_back({"headline", "all", "deferred_message_fraction", kDeferredFraction, 0.005});
    auto props = [&](const std::string& group, const Properties& p) {
        t.push_back({"properties", group, "num_recipients", p.recipients, kThousandth});
        t.push_back({"properties", group, "is_action_request", p.action_request, kThousandth});
        t.push_back({"properties", group, "is_reply_request", p.reply_request, kThousandth});
        t.push_back({"properties", group, "is_human_sender", p.human, kThousandth});
        t.push_back({"properties", group, "is_known_sender", p.known, kThousandth});
        t.push_back({"properties", group, "is_important_sender", p.important, kThousandth});
    };
    props("Deferred", kDeferredProps);
    props("NonDeferred", kNonDeferredProps);
    auto rates = [&](const std::string& table, const std::string& group, const ActionRates& r) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            t.push_back({table, group, std::string(to_string(kStrategyActions[k])), r[k], kThousandth});
        }
    };
    rates("actions", "Deferred", kDeferredTotal);
    rates("actions", "NonDeferred", kNonDeferredTotal);
    rates("actions_by_session", "Deferred-Read", kDeferredRead);
    rates("actions_by_session", "Deferred-Revisit", kDeferredRevisit);
    rates("actions_by_session", "NonDeferred-Read", kNonDeferredRead);
    rates("actions_by_session", "NonDeferred-Revisit", kNonDeferredRevisit);
    // Printed with four digits.
    for (auto& x : t) {
        if (x.table == "actions_by_session" && x.group == "NonDeferred-Revisit" && x.statistic == "Move") {
            x.tolerance = 0.00005;
        }
    }
    t.push_back({"replied", "RepliedTo", "MarkAsUnread", kRepliedMarkAsUnread, kThousandth});
    t.push_back({"replied", "RepliedTo", "num_recipients", kRepliedRecipients, kThousandth});
    return t;
}

SynthConfig calibrated_config(const CalibrationKnobs& knobs) {
    const double p = knobs.base_defer_prob;
    const double c = knobs.completion_prob;
    const double f = knobs.reply_prob;
    const double q = knobs.nondeferred_revisit_prob;
    for (double x : {p, c, f, q}) checked(x, 0.0, 1.0, "knob");
    if (p * c <= 0.0 || (1.0 - p) * f <= 0.0 || (1.0 - p) * (1.0 - f) <= 0.0) {
        throw ConfigError("calibration infeasible: every behaviour needs positive mass");
    }

    SynthConfig cfg;
    cfg.base_defer_prob = p;
    cfg.completion_prob = c;
    cfg.reply_prob = f;
    cfg.workload_slope = 0.0;
    cfg.meeting_slope = 0.0;
    cfg.body_length_slope = 0.0;
    cfg.style_mix = {0.5, 0.0, 0.5};

    const double n_dc = p * c;
    const double n_da = p * (1.0 - c);
    const double n_nr = (1.0 - p) * f;
    const double n_no = (1.0 - p) * (1.0 - f);
    const double n_nd = n_da + n_nr + n_no;

    auto& dc = cfg.params(Behavior::DeferredCompleted);
    auto& da = cfg.params(Behavior::DeferredAbandoned);
    auto& nr = cfg.params(Behavior::NonDeferredReplied);
    auto& no = cfg.params(Behavior::NonDeferredOther);

    // Metadata. NonDeferredReplied borrows the Deferred profile except for the
    // recipient count, which the replied-to mean pins down.
    dc.meta = with_properties(dc.meta, kDeferredProps);
    da.meta = dc.meta;
    nr.meta = dc.meta;
    nr.meta.mean_recipients = checked(
        ((n_dc + n_nr) * kRepliedRecipients - n_dc * kDeferredProps.recipients) / n_nr, 1.0, 1e6,
        "nondeferred_replied.mean_recipients");
    auto invert = [&](double target, double da_v, double nr_v, double hi, const char* what) {
        return checked((n_nd * target - n_da * da_v - n_nr * nr_v) / n_no, hi > 1.0 ? 1.0 : 0.0, hi, what);
    };
    const auto& nd = kNonDeferredProps;
    const auto& d = kDeferredProps;
    no.meta.mean_recipients = invert(nd.recipients, d.recipients, nr.meta.mean_recipients, 1e6, "recipients");
    no.meta.p_action_request = invert(nd.action_request, d.action_request, d.action_request, 1.0, "action_request");
    no.meta.p_reply_request = invert(nd.reply_request, d.reply_request, d.reply_request, 1.0, "reply_request");
    no.meta.p_human = invert(nd.human, d.human, d.human, 1.0, "human");
    no.meta.p_known_sender = invert(nd.known, d.known, d.known, 1.0, "known_sender");
    no.meta.p_important_sender = invert(nd.important, d.important, d.important, 1.0, "important_sender");

    // Action rates.
    dc.rates.revisit_prob = 1.0;
    da.rates.revisit_prob = q;
    nr.rates.revisit_prob = 0.0;
    no.rates.revisit_prob = q;
    for (std::size_t k = 0; k < kStrategyActions.size(); ++k) {
        const std::string name(to_string(kStrategyActions[k]));
        dc.rates.read[k] = kDeferredRead[k];
        dc.rates.revisit[k] = kDeferredRevisit[k];
        dc.rates.later[k] = checked(
            1.0 - (1.0 - kDeferredTotal[k]) / ((1.0 - kDeferredRead[k]) * (1.0 - kDeferredRevisit[k])), 0.0, 1.0,
            "deferred_completed.later." + name);

        da.rates.read[k] = kDeferredRead[k];
        nr.rates.read[k] = kNonDeferredRead[k];
        if (kStrategyActions[k] == ActionType::MarkAsUnread) {
            nr.rates.read[k] = checked(
                ((n_dc + n_nr) * kRepliedMarkAsUnread - n_dc * kDeferredTotal[k]) / n_nr, 0.0, 1.0,
                "nondeferred_replied.read.MarkAsUnread");
        }
        no.rates.read[k] = invert(kNonDeferredRead[k], da.rates.read[k], nr.rates.read[k], 1.0,
                                  ("nondeferred_other.read." + name).c_str());
        const double v = kNonDeferredRevisit[k];
        da.rates.revisit[k] = v;
        no.rates.revisit[k] = v;

        // Later-revisit rate shared by the two revisiting NonDeferred behaviours.
        auto mixture = [&](double l) {
            return n_da * total_rate(da.rates.read[k], q, v, l) + n_nr * nr.rates.read[k] +
                   n_no * total_rate(no.rates.read[k], q, v, l);
        };
        const double goal = n_nd * kNonDeferredTotal[k];
        if (mixture(0.0) > goal + 1e-12 || mixture(1.0) < goal - 1e-12) {
            throw ConfigError("calibration infeasible: no later-revisit rate reaches the NonDeferred total for " +
                              name + "; lower the revisit probability");
        }
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (mixture(mid) < goal ? lo : hi) = mid;
        }
        da.rates.later[k] = no.rates.later[k] = 0.5 * (lo + hi);
    }
    cfg.validate();
    return cfg;
}

SynthConfig planted_signal_config() {
    SynthConfig cfg = calibrated_config();
    cfg.base_defer_prob = 0.02;
    cfg.completion_prob = 0.9;
    cfg.body_length_slope = 1.0;
    cfg.workload_slope = 0.3;
    cfg.mean_body_length = 150.0;
    cfg.body_length_sigma = 0.9;
    // Identical metadata and explicit-signal rates everywhere, so only the
    // planted dependencies separate the classes.
    const auto shared_meta = cfg.params(Behavior::DeferredCompleted).meta;
    auto shared_rates = cfg.params(Behavior::NonDeferredOther).rates;
    shared_rates.read[slot_index(ActionType::Flag)] = 0.25;
    shared_rates.read[slot_index(ActionType::MarkAsUnread)] = 0.35;
    for (auto& b : cfg.behaviors) {
        const double revisit_prob = b.rates.revisit_prob;
        b.meta = shared_meta;
        b.rates = shared_rates;
        b.rates.revisit_prob = revisit_prob;
    }
    cfg.validate();
    return cfg;
}

bool CalibrationReport::all_pass() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const CalibrationEntry& e) { return e.status == CalibrationStatus::Pass; });
}

const CalibrationEntry* CalibrationReport::find(std::string_view table, std::string_view group,
                                                std::string_view statistic) const {
    for (const auto& e : entries) {
        if (e.target.table == table && e.target.group == group && e.target.statistic == statistic) return &e;
    }
    return nullptr;
}

CalibrationReport check_calibration(const Corpus& corpus, const GroundTruth& truth,
                                    const std::vector<CalibrationTarget>& targets,
                                    const CalibrationCheckOptions& options) {
    CalibrationReport report;
    const CorpusIndex index(corpus);
    const Sessions sessions = sessionize(corpus, options.gap_threshold);
    const LabelMap labels = label_corpus(index, sessions);

    std::size_t disagreements = 0;
    for (const auto& [id, l] : labels) {
        const auto it = truth.find(id);
        if (it == truth.end()) continue;
        const bool truth_deferred = it->second.intent == Intent::Deferred && it->second.completed;
        if ((l.label == Label::Deferred) != truth_deferred) ++disagreements;
    }
    if (!truth.empty()) {
        report.notes.push_back("label/truth disagreements: " + std::to_string(disagreements));
    }

    CharacterizeOptions copts;
    copts.num_resamples = options.num_resamples;
    copts.alpha = options.alpha;
    copts.seed = options.seed;
    const auto tables = characterize(labels, sessions, index, copts);

    for (const auto& target : targets) {
        CalibrationEntry e;
        e.target = target;
        const StatTable* table = nullptr;
        for (const auto& t : tables) {
            if (t.name == target.table) table = &t;
        }
        const StatRow* row = table ? table->find(target.group, target.statistic) : nullptr;
        if (!row) {
            const std::string key = target.group + "/" + target.statistic;
            if (table && std::find(table->notes.begin(), table->notes.end(), key + ": no data") != table->notes.end()) {
                e.status = CalibrationStatus::InsufficientData;
            } else {
                e.status = CalibrationStatus::Missing;
                report.notes.push_back("skipped " + target.table + "/" + key + ": not measured");
            }
        } else {
            e.measured = row->value;
            e.ci_low = row->ci_low;
            e.ci_high = row->ci_high;
            e.n = row->n;
            if (row->n < 2 || !std::isfinite(row->value)) {
                e.status = CalibrationStatus::InsufficientData;
            } else {
                const bool overlap =
                    target.value - target.tolerance <= row->ci_high && target.value + target.tolerance >= row->ci_low;
                e.status = overlap ? CalibrationStatus::Pass : CalibrationStatus::Fail;
            }
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

void print_calibration(std::ostream& out, const CalibrationReport& report) {
    std::size_t pass = 0;
    for (const auto& e : report.entries) {
        out << std::left << std::setw(20) << e.target.table << std::setw(22) << e.target.group << std::setw(28)
            << e.target.statistic << std::right << std::fixed << std::setprecision(4) << " target " << e.target.value
            << " measured " << e.measured << " [" << e.ci_low << ", " << e.ci_high << "] n=" << e.n << "  "
            << to_string(e.status) << '\n';
        pass += e.status == CalibrationStatus::Pass;
    }
    out.unsetf(std::ios::floatfield);
    out << pass << "/" << report.entries.size() << " targets pass\n";
    for (const auto& n : report.notes) out << "note: " << n << '\n';
}

}  // namespace deferral
