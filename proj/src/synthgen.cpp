#include "deferral/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <variant>

#include <nlohmann/json.hpp>

#include "deferral/csv.hpp"
#include "deferral/error.hpp"
#include "deferral/parallel.hpp"
#include "deferral/stats.hpp"

namespace deferral {

std::string_view to_string(Behavior b) noexcept {
    switch (b) {
        case Behavior::DeferredCompleted: return "deferred_completed";
        case Behavior::DeferredAbandoned: return "deferred_abandoned";
        case Behavior::NonDeferredReplied: return "nondeferred_replied";
        case Behavior::NonDeferredOther: return "nondeferred_other";
    }
    return "?";
}

namespace {

constexpr Timestamp kDay = 86400;
constexpr Timestamp kHour = 3600;
constexpr Timestamp kMinSessionGap = 601;  // strictly more than the 600 s inactivity threshold

const std::array<const char*, kStrategyActions.size()> kActionKeys = {
    "delete", "flag", "flag_complete", "link_clicked", "mark_as_unread", "move", "opened_an_attachment",
};

// Emission order inside one message's block of actions.
constexpr std::array<ActionType, 5> kPreStrongOrder = {
    ActionType::OpenedAnAttachment, ActionType::LinkClicked, ActionType::Flag, ActionType::MarkAsUnread,
    ActionType::FlagComplete,
};
constexpr std::array<ActionType, 2> kPostStrongOrder = {ActionType::Move, ActionType::Delete};

std::size_t slot_of(ActionType a) {
    for (std::size_t k = 0; k < kStrategyActions.size(); ++k) {
        if (kStrategyActions[k] == a) return k;
    }
    return kStrategyActions.size();
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

using FieldRef = std::variant<std::int64_t*, std::uint64_t*, double*>;

std::vector<std::pair<std::string, FieldRef>> config_fields(SynthConfig& c) {
    std::vector<std::pair<std::string, FieldRef>> f = {
        {"num_users", &c.num_users},
        {"days", &c.days},
        {"seed", &c.seed},
        {"start_time", &c.start_time},
        {"arrivals_per_user_day", &c.arrivals_per_user_day},
        {"base_defer_prob", &c.base_defer_prob},
        {"workload_slope", &c.workload_slope},
        {"meeting_slope", &c.meeting_slope},
        {"body_length_slope", &c.body_length_slope},
        {"completion_prob", &c.completion_prob},
        {"reply_prob", &c.reply_prob},
        {"style_mix.piler", &c.style_mix[0]},
        {"style_mix.zero_inbox", &c.style_mix[1]},
        {"style_mix.zero_unread", &c.style_mix[2]},
        {"sessions_per_day.piler", &c.sessions_per_day[0]},
        {"sessions_per_day.zero_inbox", &c.sessions_per_day[1]},
        {"sessions_per_day.zero_unread", &c.sessions_per_day[2]},
        {"zero_inbox_file_prob", &c.zero_inbox_file_prob},
        {"search_prob", &c.search_prob},
        {"mean_body_length", &c.mean_body_length},
        {"body_length_sigma", &c.body_length_sigma},
        {"meetings_per_day", &c.meetings_per_day},
        {"revisit_delay_p", &c.revisit_delay_p},
        {"strong_action_mix.reply", &c.strong_action_mix[0]},
        {"strong_action_mix.reply_all", &c.strong_action_mix[1]},
        {"strong_action_mix.forward", &c.strong_action_mix[2]},
    };
    for (std::size_t b = 0; b < kNumBehaviors; ++b) {
        const std::string p = std::string(to_string(static_cast<Behavior>(b))) + ".";
        auto& bp = c.behaviors[b];
        f.emplace_back(p + "meta.mean_recipients", &bp.meta.mean_recipients);
        f.emplace_back(p + "meta.p_action_request", &bp.meta.p_action_request);
        f.emplace_back(p + "meta.p_reply_request", &bp.meta.p_reply_request);
        f.emplace_back(p + "meta.p_human", &bp.meta.p_human);
        f.emplace_back(p + "meta.p_known_sender", &bp.meta.p_known_sender);
        f.emplace_back(p + "meta.p_important_sender", &bp.meta.p_important_sender);
        f.emplace_back(p + "meta.p_same_org", &bp.meta.p_same_org);
        f.emplace_back(p + "meta.p_bulk", &bp.meta.p_bulk);
        f.emplace_back(p + "meta.p_in_thread", &bp.meta.p_in_thread);
        f.emplace_back(p + "revisit_prob", &bp.rates.revisit_prob);
        for (std::size_t k = 0; k < kStrategyActions.size(); ++k) {
            f.emplace_back(p + "read." + kActionKeys[k], &bp.rates.read[k]);
            f.emplace_back(p + "revisit." + kActionKeys[k], &bp.rates.revisit[k]);
            f.emplace_back(p + "later." + kActionKeys[k], &bp.rates.later[k]);
        }
    }
    return f;
}

void require_probability(double p, const std::string& name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(name + " must be a probability in [0,1]");
}

}  // namespace

void SynthConfig::validate() const {
    if (num_users < 1) throw ConfigError("num_users must be >= 1");
    if (days < 1) throw ConfigError("days must be >= 1");
    if (!(arrivals_per_user_day >= 0.0)) throw ConfigError("arrivals_per_user_day must be >= 0");
    require_probability(base_defer_prob, "base_defer_prob");
    require_probability(completion_prob, "completion_prob");
    require_probability(reply_prob, "reply_prob");
    require_probability(zero_inbox_file_prob, "zero_inbox_file_prob");
    require_probability(search_prob, "search_prob");
    if (!(revisit_delay_p > 0.0 && revisit_delay_p <= 1.0)) throw ConfigError("revisit_delay_p must be in (0,1]");
    double mix = 0.0;
    for (double p : style_mix) {
        require_probability(p, "style_mix");
        mix += p;
    }
    if (std::abs(mix - 1.0) > 1e-9) throw ConfigError("style_mix must sum to 1");
    double strong = 0.0;
    for (double p : strong_action_mix) {
        require_probability(p, "strong_action_mix");
        strong += p;
    }
    if (std::abs(strong - 1.0) > 1e-9) throw ConfigError("strong_action_mix must sum to 1");
    for (double s : sessions_per_day) {
        if (!(s > 0.0)) throw ConfigError("sessions_per_day must be positive");
    }
    if (!(mean_body_length > 0.0) || !(body_length_sigma >= 0.0)) throw ConfigError("invalid body length distribution");
    if (!(meetings_per_day >= 0.0)) throw ConfigError("meetings_per_day must be >= 0");
    for (double s : {workload_slope, meeting_slope, body_length_slope}) {
        if (!std::isfinite(s)) throw ConfigError("slopes must be finite");
    }
    for (std::size_t b = 0; b < kNumBehaviors; ++b) {
        const auto& bp = behaviors[b];
        const std::string name(to_string(static_cast<Behavior>(b)));
        if (!(bp.meta.mean_recipients >= 1.0)) throw ConfigError(name + ": mean_recipients must be >= 1");
        for (double p : {bp.meta.p_action_request, bp.meta.p_reply_request, bp.meta.p_human, bp.meta.p_known_sender,
                         bp.meta.p_important_sender, bp.meta.p_same_org, bp.meta.p_bulk, bp.meta.p_in_thread,
                         bp.rates.revisit_prob}) {
            require_probability(p, name);
        }
        for (const auto* rates : {&bp.rates.read, &bp.rates.revisit, &bp.rates.later}) {
            for (double p : *rates) require_probability(p, name + " action rate");
        }
    }
}

void write_config(std::ostream& out, const SynthConfig& config) {
    SynthConfig copy = config;
    for (const auto& [key, ref] : config_fields(copy)) {
        out << key << " = ";
        std::visit(
            [&](auto* p) {
                if constexpr (std::is_same_v<decltype(p), double*>) {
                    out << csv::format_double(*p);
                } else {
                    out << *p;
                }
            },
            ref);
        out << '\n';
    }
}

SynthConfig read_config(std::istream& in, SynthConfig base) {
    auto fields = config_fields(base);
    std::map<std::string, FieldRef> lookup(fields.begin(), fields.end());
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config", lineno, "expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        auto it = lookup.find(key);
        if (it == lookup.end()) throw ParseError("config", lineno, "unknown key \"" + key + "\"");
        try {
            std::size_t used = 0;
            std::visit(
                [&](auto* p) {
                    using T = std::remove_pointer_t<decltype(p)>;
                    if constexpr (std::is_same_v<T, double>) {
                        *p = std::stod(value, &used);
                    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                        *p = std::stoull(value, &used);
                    } else {
                        *p = std::stoll(value, &used);
                    }
                },
                it->second);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ParseError("config", lineno, "bad value for \"" + key + "\": " + value);
        }
    }
    return base;
}

void write_truth(std::ostream& out, const GroundTruth& truth) {
    for (const auto& [id, t] : truth) {
        nlohmann::ordered_json j;
        j["msg"] = id;
        j["intent"] = t.intent == Intent::Deferred ? "Deferred" : "NonDeferred";
        j["completed"] = t.completed;
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

struct UserOutput {
    std::vector<ActionRecord> actions;
    std::vector<MessageMeta> messages;
    std::vector<CalendarSlot> calendar;
    std::vector<std::pair<std::string, TruthEntry>> truth;
    std::vector<PlannedSession> plan;
};

class UserSimulator {
public:
    UserSimulator(const SynthConfig& config, std::int64_t user_index)
        : cfg_(config), rng_(derive_seed(config.seed, static_cast<std::uint64_t>(user_index))) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "u%05lld", static_cast<long long>(user_index));
        user_id_ = buf;
    }

    UserOutput run() {
        pick_style();
        make_deliveries();
        make_calendar();
        make_window_candidates();
        simulate();
        return std::move(out_);
    }

private:
    struct Message {
        std::string id;
        Timestamp delivery{0};
        std::int64_t body{0};
        Behavior behavior{Behavior::NonDeferredOther};
        ActionType strong{ActionType::Reply};
    };

    struct Plan {
        std::size_t message{0};
        bool first_revisit{true};
        std::vector<ActionType> actions;  // for later revisits
    };

    bool coin(double p) { return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng_); }
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    std::int64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        return std::poisson_distribution<std::int64_t>(mean)(rng_);
    }

    void pick_style() {
        std::discrete_distribution<int> d(cfg_.style_mix.begin(), cfg_.style_mix.end());
        style_ = static_cast<ManagementStyle>(d(rng_));
    }

    void make_deliveries() {
        for (std::int64_t d = 0; d < cfg_.days; ++d) {
            const auto k = poisson(cfg_.arrivals_per_user_day);
            for (std::int64_t i = 0; i < k; ++i) {
                Message m;
                m.delivery = cfg_.start_time + d * kDay + static_cast<Timestamp>(uniform(0.0, kDay));
                const double mu = std::log(cfg_.mean_body_length) - 0.5 * cfg_.body_length_sigma * cfg_.body_length_sigma;
                m.body = static_cast<std::int64_t>(
                    std::llround(std::lognormal_distribution<double>(mu, cfg_.body_length_sigma)(rng_)));
                messages_.push_back(std::move(m));
            }
        }
        std::stable_sort(messages_.begin(), messages_.end(),
                         [](const Message& a, const Message& b) { return a.delivery < b.delivery; });
        for (std::size_t i = 0; i < messages_.size(); ++i) {
            char buf[48];
            std::snprintf(buf, sizeof buf, "%s-m%06zu", user_id_.c_str(), i);
            messages_[i].id = buf;
            delivery_times_.push_back(messages_[i].delivery);
        }
    }

    void make_calendar() {
        for (std::int64_t d = 0; d < cfg_.days; ++d) {
            const Timestamp day = cfg_.start_time + d * kDay;
            const std::chrono::weekday wd{std::chrono::sys_days{std::chrono::days{day / kDay}}};
            if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) continue;
            const bool ooo = coin(0.03);
            std::array<std::int64_t, 24> busy{}, tentative{}, organized{};
            const auto meetings = ooo ? 0 : poisson(cfg_.meetings_per_day);
            for (std::int64_t i = 0; i < meetings; ++i) {
                const int hour = std::uniform_int_distribution<int>(9, 16)(rng_);
                const int length = coin(0.3) ? 2 : 1;
                const bool tent = coin(0.2);
                const bool org = coin(0.3);
                for (int h = hour; h < std::min(hour + length, 18); ++h) {
                    (tent ? tentative : busy)[h] += 1;
                    organized[h] += org;
                }
            }
            for (int h = 8; h < 19; ++h) {
                CalendarSlot s;
                s.user_id = user_id_;
                s.slot_start = day + h * kHour;
                s.num_meetings = busy[h] + tentative[h];
                s.num_meetings_organized = organized[h];
                if (ooo) {
                    s.frac_ooo = 1.0;
                    s.frac_free = 0.0;
                } else {
                    s.frac_busy = std::min(1.0, 0.5 * static_cast<double>(busy[h]));
                    s.frac_tentative = std::min(1.0 - s.frac_busy, 0.5 * static_cast<double>(tentative[h]));
                    s.frac_free = 1.0 - s.frac_busy - s.frac_tentative;
                }
                meetings_at_[s.slot_start] = s.num_meetings;
                out_.calendar.push_back(std::move(s));
            }
        }
    }

    void make_window_candidates() {
        const double per_day = cfg_.sessions_per_day[static_cast<std::size_t>(style_)];
        for (std::int64_t d = 0; d < cfg_.days; ++d) {
            const auto n = std::max<std::int64_t>(1, poisson(per_day));
            std::vector<Timestamp> day;
            for (std::int64_t i = 0; i < n; ++i) {
                day.push_back(cfg_.start_time + d * kDay + static_cast<Timestamp>(uniform(7 * kHour, 22 * kHour)));
            }
            std::sort(day.begin(), day.end());
            candidates_.insert(candidates_.end(), day.begin(), day.end());
        }
    }

    std::size_t revisit_delay() {
        return 1 + std::min<std::size_t>(30, std::geometric_distribution<std::size_t>(cfg_.revisit_delay_p)(rng_));
    }

    ActionType sample_strong() {
        std::discrete_distribution<int> d(cfg_.strong_action_mix.begin(), cfg_.strong_action_mix.end());
        constexpr std::array<ActionType, 3> kinds = {ActionType::Reply, ActionType::ReplyAll, ActionType::Forward};
        return kinds[d(rng_)];
    }

    void emit(std::size_t message, ActionType action) {
        Timestamp ts = session_start_;
        if (!session_actions_.empty()) {
            ts = session_actions_.back().timestamp + std::uniform_int_distribution<Timestamp>(5, 90)(rng_);
        }
        session_actions_.push_back(ActionRecord{user_id_, messages_[message].id, action, ts});
    }

    const StrategyRates& rates(std::size_t message) const {
        return cfg_.params(messages_[message].behavior).rates;
    }

    /// Strategy actions drawn from `probs`, wrapped around an optional strong action.
    void emit_block(std::size_t message, const ActionRates& probs, bool strong) {
        std::array<bool, kStrategyActions.size()> take{};
        for (std::size_t k = 0; k < probs.size(); ++k) take[k] = coin(probs[k]);
        for (ActionType a : kPreStrongOrder) {
            if (take[slot_of(a)]) emit(message, a);
        }
        if (strong) emit(message, messages_[message].strong);
        for (ActionType a : kPostStrongOrder) {
            if (take[slot_of(a)]) emit(message, a);
        }
        if (style_ == ManagementStyle::ZeroInbox && !take[slot_of(ActionType::Move)] &&
            !take[slot_of(ActionType::Delete)]) {
            const auto b = messages_[message].behavior;
            const bool files_now = strong || b == Behavior::NonDeferredOther;
            if (files_now && coin(cfg_.zero_inbox_file_prob)) emit(message, ActionType::Move);
        }
    }

    void schedule(std::size_t candidate, Plan plan) { plans_[candidate].push_back(std::move(plan)); }

    void first_read(std::size_t message, std::size_t candidate) {
        emit(message, ActionType::Read);
        const Timestamp t = session_actions_.back().timestamp;
        auto& m = messages_[message];

        const auto delivered_before =
            std::lower_bound(delivery_times_.begin(), delivery_times_.end(), t) - delivery_times_.begin();
        // Every message read so far was delivered before t and has an action before t; m itself is excluded.
        const std::int64_t unhandled =
            static_cast<std::int64_t>(delivered_before) - static_cast<std::int64_t>(read_count_) - 1;
        ++read_count_;

        double p = cfg_.base_defer_prob;
        if (p > 0.0 && p < 1.0) {
            const auto slot = meetings_at_.find(t - t % kHour);
            const double meetings = slot == meetings_at_.end() ? 0.0 : static_cast<double>(slot->second);
            p = logistic(std::log(p / (1.0 - p)) + cfg_.workload_slope * static_cast<double>(unhandled) +
                         cfg_.meeting_slope * meetings +
                         cfg_.body_length_slope * static_cast<double>(m.body) / 100.0);
        }
        const bool deferred = coin(p);
        TruthEntry truth;
        truth.intent = deferred ? Intent::Deferred : Intent::NonDeferred;
        truth.unhandled_at_read = unhandled;
        if (deferred) {
            truth.completed = coin(cfg_.completion_prob);
            m.behavior = truth.completed ? Behavior::DeferredCompleted : Behavior::DeferredAbandoned;
        } else {
            truth.completed = coin(cfg_.reply_prob);
            m.behavior = truth.completed ? Behavior::NonDeferredReplied : Behavior::NonDeferredOther;
        }
        truth.behavior = m.behavior;
        if (truth.completed) {
            m.strong = sample_strong();
            truth.planned_strong_action = m.strong;
        }
        sample_metadata(message);
        out_.truth.emplace_back(m.id, truth);

        emit_block(message, rates(message).read, m.behavior == Behavior::NonDeferredReplied);
        const bool revisit = m.behavior == Behavior::DeferredCompleted || coin(rates(message).revisit_prob);
        if (revisit) schedule(candidate + revisit_delay(), Plan{message, true, {}});
    }

    void sample_metadata(std::size_t message) {
        const auto& m = messages_[message];
        const auto& dist = cfg_.params(m.behavior).meta;
        MessageMeta meta;
        meta.message_id = m.id;
        meta.user_id = user_id_;
        meta.delivery_time = m.delivery;
        meta.unique_body_length = std::max<std::int64_t>(0, m.body);
        meta.num_recipients = 1 + poisson(dist.mean_recipients - 1.0);
        meta.is_action_request = coin(dist.p_action_request);
        meta.is_reply_request = coin(dist.p_reply_request);
        meta.is_human_sender = coin(dist.p_human);
        meta.is_known_sender = coin(dist.p_known_sender);
        meta.is_important_sender = coin(dist.p_important_sender);
        meta.is_same_org = coin(dist.p_same_org);
        meta.is_bulk = coin(dist.p_bulk);
        meta.is_in_thread = coin(dist.p_in_thread);
        out_.messages.push_back(std::move(meta));
    }

    void revisit(const Plan& plan, std::size_t candidate) {
        const std::size_t message = plan.message;
        if (!plan.first_revisit) {
            emit(message, ActionType::Read);
            for (ActionType a : kPreStrongOrder) {
                if (std::find(plan.actions.begin(), plan.actions.end(), a) != plan.actions.end()) emit(message, a);
            }
            for (ActionType a : kPostStrongOrder) {
                if (std::find(plan.actions.begin(), plan.actions.end(), a) != plan.actions.end()) emit(message, a);
            }
            return;
        }
        emit(message, coin(cfg_.search_prob) ? ActionType::SearchRetrieved : ActionType::Read);
        const auto& r = rates(message);
        emit_block(message, r.revisit, messages_[message].behavior == Behavior::DeferredCompleted);
        Plan later{message, false, {}};
        for (std::size_t k = 0; k < kStrategyActions.size(); ++k) {
            if (coin(r.later[k])) later.actions.push_back(kStrategyActions[k]);
        }
        if (!later.actions.empty()) schedule(candidate + revisit_delay(), std::move(later));
    }

    void simulate() {
        const Timestamp window_end = cfg_.start_time + cfg_.days * kDay;
        std::size_t next_unread = 0;
        bool have_last = false;
        Timestamp last_end = 0;
        for (std::size_t c = 0;; ++c) {
            if (c >= candidates_.size()) {
                const bool pending = next_unread < messages_.size() || plans_.lower_bound(c) != plans_.end();
                if (!pending) break;
                const auto day = std::max<Timestamp>(window_end, candidates_.empty() ? window_end : candidates_.back());
                const Timestamp next_day = (day / kDay + 1) * kDay;
                candidates_.push_back(next_day + 9 * kHour + static_cast<Timestamp>(uniform(0, kHour)));
            }
            session_start_ = have_last ? std::max(candidates_[c], last_end + kMinSessionGap) : candidates_[c];
            session_actions_.clear();

            if (auto it = plans_.find(c); it != plans_.end()) {
                const auto plans = std::move(it->second);
                plans_.erase(it);
                for (const auto& plan : plans) revisit(plan, c);
            }
            while (next_unread < messages_.size() && messages_[next_unread].delivery < session_start_) {
                first_read(next_unread, c);
                ++next_unread;
            }
            if (session_actions_.empty()) continue;

            out_.plan.push_back(PlannedSession{session_actions_.front().timestamp, session_actions_.back().timestamp,
                                               session_actions_.size()});
            last_end = session_actions_.back().timestamp;
            have_last = true;
            for (auto& a : session_actions_) out_.actions.push_back(std::move(a));
        }
    }

    const SynthConfig& cfg_;
    std::mt19937_64 rng_;
    std::string user_id_;
    ManagementStyle style_{ManagementStyle::Piler};
    std::vector<Message> messages_;
    std::vector<Timestamp> delivery_times_;
    std::map<Timestamp, std::int64_t> meetings_at_;
    std::vector<Timestamp> candidates_;
    std::map<std::size_t, std::vector<Plan>> plans_;
    std::size_t read_count_{0};
    Timestamp session_start_{0};
    std::vector<ActionRecord> session_actions_;
    UserOutput out_;
};

}  // namespace

SynthResult generate(const SynthConfig& config) {
    config.validate();
    std::vector<UserOutput> users(static_cast<std::size_t>(config.num_users));
    parallel_for(users.size(), [&](std::size_t u) {
        users[u] = UserSimulator(config, static_cast<std::int64_t>(u)).run();
    });

    SynthResult result;
    for (auto& u : users) {
        std::string user_id;
        if (!u.plan.empty()) user_id = u.actions.front().user_id;
        for (auto& a : u.actions) result.corpus.actions.push_back(std::move(a));
        for (auto& m : u.messages) {
            auto id = m.message_id;
            result.corpus.messages.emplace(std::move(id), std::move(m));
        }
        for (auto& s : u.calendar) {
            CalendarKey key{s.user_id, s.slot_start};
            result.corpus.calendar.emplace(std::move(key), std::move(s));
        }
        for (auto& [id, t] : u.truth) result.truth.emplace(std::move(id), t);
        if (!user_id.empty()) result.session_plan[user_id] = std::move(u.plan);
    }
    result.corpus.normalize();
    return result;
}

void save_synth(const std::filesystem::path& dir, const SynthResult& result) {
    save_corpus(dir, result.corpus);
    std::ofstream out(dir / "truth.jsonl", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "truth.jsonl").string());
    write_truth(out, result.truth);
}

}  // namespace deferral
