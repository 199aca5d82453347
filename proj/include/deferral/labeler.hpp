#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "deferral/log_model.hpp"
#include "deferral/sessionizer.hpp"

namespace deferral {

enum class Label : std::uint8_t { Deferred, NonDeferred, NeverRead };

std::string_view to_string(Label l) noexcept;
Label parse_label(std::string_view s);

/// Where a Flag / MarkAsUnread must occur to count as an explicit deferral signal.
enum class SignalWindow : std::uint8_t {
    ReadSession,  ///< inside the first-read session
    PreStrong,    ///< any time before the first strong action (or ever, if none)
};

std::string_view to_string(SignalWindow w) noexcept;
SignalWindow parse_signal_window(std::string_view s);

struct DeferralLabel {
    std::string message_id;
    Label label{Label::NeverRead};
    std::optional<std::int32_t> first_read_session;
    std::optional<std::int32_t> first_strong_action_session;
    bool explicit_signal{false};

    friend bool operator==(const DeferralLabel&, const DeferralLabel&) = default;
};

struct LabelOptions {
    SignalWindow signal_window{SignalWindow::ReadSession};
};

/// Counters for records the definition cannot place cleanly.
struct LabelAnomalies {
    /// Strong action observed before the first Read (labelled NonDeferred).
    std::size_t strong_before_read{0};
    /// Strong action on a message never Read (labelled NeverRead).
    std::size_t strong_without_read{0};
};

/// Labels one message. Throws LookupError for unknown ids.
DeferralLabel label_message(std::string_view message_id, const Sessions& sessions, const CorpusIndex& index,
                            const LabelOptions& options = {}, LabelAnomalies* anomalies = nullptr);

using LabelMap = std::map<std::string, DeferralLabel>;

LabelMap label_corpus(const CorpusIndex& index, const Sessions& sessions, const LabelOptions& options = {},
                      LabelAnomalies* anomalies = nullptr);

/// labels.jsonl: {"msg":str,"label":str,"read_sess":int|null,"strong_sess":int|null,"explicit":bool}
void write_labels(std::ostream& out, const LabelMap& labels);
LabelMap read_labels(std::istream& in);

}  // namespace deferral
