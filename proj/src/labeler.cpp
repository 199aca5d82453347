#include "deferral/labeler.hpp"

#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "deferral/error.hpp"

namespace deferral {

std::string_view to_string(Label l) noexcept {
    switch (l) {
        case Label::Deferred: return "Deferred";
        case Label::NonDeferred: return "NonDeferred";
        case Label::NeverRead: return "NeverRead";
    }
    return "?";
}

Label parse_label(std::string_view s) {
    if (s == "Deferred") return Label::Deferred;
    if (s == "NonDeferred") return Label::NonDeferred;
    if (s == "NeverRead") return Label::NeverRead;
    throw ValidationError("unknown label \"" + std::string(s) + "\"");
}

std::string_view to_string(SignalWindow w) noexcept {
    return w == SignalWindow::ReadSession ? "read-session" : "pre-strong";
}

SignalWindow parse_signal_window(std::string_view s) {
    if (s == "read-session") return SignalWindow::ReadSession;
    if (s == "pre-strong") return SignalWindow::PreStrong;
    throw ValidationError("unknown signal window \"" + std::string(s) + "\"");
}

namespace {

DeferralLabel label_index(std::size_t m, const Sessions& sessions, const CorpusIndex& index,
                          const LabelOptions& options, LabelAnomalies* anomalies) {
    const auto& actions = index.corpus().actions;
    DeferralLabel out;
    out.message_id = index.message_id(m);

    std::optional<std::size_t> first_read;
    std::optional<std::size_t> first_strong;
    for (std::size_t i : index.actions_of(m)) {
        const auto a = actions[i].action;
        if (!first_read && a == ActionType::Read) first_read = i;
        if (!first_strong && is_strong_action(a)) first_strong = i;
    }
    if (first_strong) out.first_strong_action_session = sessions.ordinal_of_action[*first_strong];
    if (!first_read) {
        out.label = Label::NeverRead;
        if (first_strong && anomalies) ++anomalies->strong_without_read;
        return out;
    }
    out.first_read_session = sessions.ordinal_of_action[*first_read];

    if (!first_strong) {
        out.label = Label::NonDeferred;
    } else if (*out.first_strong_action_session > *out.first_read_session) {
        out.label = Label::Deferred;
    } else {
        out.label = Label::NonDeferred;
        if (*first_strong < *first_read && anomalies) ++anomalies->strong_before_read;
    }

    for (std::size_t i : index.actions_of(m)) {
        if (!is_explicit_signal(actions[i].action)) continue;
        if (options.signal_window == SignalWindow::ReadSession) {
            if (sessions.ordinal_of_action[i] == *out.first_read_session) {
                out.explicit_signal = true;
                break;
            }
        } else {
            if (!first_strong || actions[i].timestamp < actions[*first_strong].timestamp) {
                out.explicit_signal = true;
                break;
            }
        }
    }
    return out;
}

}  // namespace

DeferralLabel label_message(std::string_view message_id, const Sessions& sessions, const CorpusIndex& index,
                            const LabelOptions& options, LabelAnomalies* anomalies) {
    return label_index(index.message_index(message_id), sessions, index, options, anomalies);
}

LabelMap label_corpus(const CorpusIndex& index, const Sessions& sessions, const LabelOptions& options,
                      LabelAnomalies* anomalies) {
    LabelMap out;
    for (std::size_t m = 0; m < index.num_messages(); ++m) {
        out.emplace_hint(out.end(), index.message_id(m), label_index(m, sessions, index, options, anomalies));
    }
    return out;
}

void write_labels(std::ostream& out, const LabelMap& labels) {
    for (const auto& [id, l] : labels) {
        nlohmann::ordered_json j;
        j["msg"] = id;
        j["label"] = std::string(to_string(l.label));
        j["read_sess"] = l.first_read_session ? nlohmann::ordered_json(*l.first_read_session) : nlohmann::ordered_json(nullptr);
        j["strong_sess"] =
            l.first_strong_action_session ? nlohmann::ordered_json(*l.first_strong_action_session) : nlohmann::ordered_json(nullptr);
        j["explicit"] = l.explicit_signal;
        out << j.dump() << '\n';
    }
}

LabelMap read_labels(std::istream& in) {
    LabelMap out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        try {
            auto j = nlohmann::json::parse(text);
            DeferralLabel l;
            l.message_id = j.at("msg").get<std::string>();
            l.label = parse_label(j.at("label").get<std::string>());
            if (!j.at("read_sess").is_null()) l.first_read_session = j["read_sess"].get<std::int32_t>();
            if (!j.at("strong_sess").is_null()) l.first_strong_action_session = j["strong_sess"].get<std::int32_t>();
            l.explicit_signal = j.at("explicit").get<bool>();
            auto id = l.message_id;
            out.emplace(std::move(id), std::move(l));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("labels.jsonl", line, e.what());
        } catch (const ValidationError& e) {
            throw ParseError("labels.jsonl", line, e.what());
        }
    }
    return out;
}

}  // namespace deferral
