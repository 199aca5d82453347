#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deferral/log_model.hpp"

namespace deferral {

/// Latent per-message behaviour. The first two carry a deferral intent.
enum class Behavior : std::uint8_t {
    DeferredCompleted,   ///< deferred, strong action in a later session
    DeferredAbandoned,   ///< deferred, never completed
    NonDeferredReplied,  ///< strong action inside the first-read session
    NonDeferredOther,    ///< no strong action
};
inline constexpr std::size_t kNumBehaviors = 4;

std::string_view to_string(Behavior b) noexcept;

struct MetadataDist {
    double mean_recipients{5.0};  // recipients = 1 + Poisson(mean - 1)
    double p_action_request{0.05};
    double p_reply_request{0.1};
    double p_human{0.8};
    double p_known_sender{0.7};
    double p_important_sender{0.4};
    double p_same_org{0.6};
    double p_bulk{0.2};
    double p_in_thread{0.4};
};

/// Per-action Bernoulli rates, indexed like kStrategyActions.
using ActionRates = std::array<double, kStrategyActions.size()>;

struct StrategyRates {
    ActionRates read{};     ///< in the first-read session
    ActionRates revisit{};  ///< in the first revisit session
    ActionRates later{};    ///< in a second, later revisit session
    double revisit_prob{0.0};
};

struct BehaviorParams {
    MetadataDist meta;
    StrategyRates rates;
};

struct SynthConfig {
    std::int64_t num_users{2000};
    std::int64_t days{14};
    std::uint64_t seed{1};
    Timestamp start_time{1525651200};  // Monday 2018-05-07 00:00 UTC

    double arrivals_per_user_day{10.0};
    double base_defer_prob{0.06};
    double workload_slope{0.0};       // logit units per unhandled message
    double meeting_slope{0.0};        // logit units per meeting in the read-time calendar slot
    double body_length_slope{0.0};    // logit units per 100 words of body
    double completion_prob{0.5};
    double reply_prob{0.15};          // NonDeferred intents answered in the first-read session
    std::array<double, 3> style_mix{0.5, 0.0, 0.5};  // Piler, ZeroInbox, ZeroUnread
    std::array<double, 3> sessions_per_day{2.5, 5.0, 5.0};
    double zero_inbox_file_prob{0.8};
    double search_prob{0.05};
    double mean_body_length{120.0};
    double body_length_sigma{0.8};
    double meetings_per_day{3.0};
    double revisit_delay_p{0.35};     // geometric delay, in candidate sessions
    std::array<double, 3> strong_action_mix{0.6, 0.25, 0.15};  // Reply, ReplyAll, Forward

    std::array<BehaviorParams, kNumBehaviors> behaviors{};

    BehaviorParams& params(Behavior b) { return behaviors[static_cast<std::size_t>(b)]; }
    const BehaviorParams& params(Behavior b) const { return behaviors[static_cast<std::size_t>(b)]; }

    /// Throws ConfigError.
    void validate() const;
};

/// Flat `key = value` text, one field per line, '#' comments.
void write_config(std::ostream& out, const SynthConfig& config);
/// Starts from `base` and overrides every key present. Unknown keys are errors.
SynthConfig read_config(std::istream& in, SynthConfig base);

enum class Intent : std::uint8_t { Deferred, NonDeferred };

struct TruthEntry {
    Intent intent{Intent::NonDeferred};
    bool completed{false};  ///< a strong action eventually happens
    std::optional<ActionType> planned_strong_action;
    Behavior behavior{Behavior::NonDeferredOther};
    std::int64_t unhandled_at_read{0};
};

using GroundTruth = std::map<std::string, TruthEntry>;

/// truth.jsonl: {"msg":str,"intent":str,"completed":bool}
void write_truth(std::ostream& out, const GroundTruth& truth);

struct PlannedSession {
    Timestamp start{0};
    Timestamp end{0};
    std::size_t num_actions{0};
    friend bool operator==(const PlannedSession&, const PlannedSession&) = default;
};

struct SynthResult {
    Corpus corpus;
    GroundTruth truth;
    /// The generator's own session boundaries, per user, in order.
    std::map<std::string, std::vector<PlannedSession>> session_plan;
};

/// Deterministic in `config` (seed included). Throws ConfigError.
SynthResult generate(const SynthConfig& config);

void save_synth(const std::filesystem::path& dir, const SynthResult& result);

// ----- calibration ---------------------------------------------------------

/// One published statistic. Identified by the characterizer table/group/statistic
/// it is compared against. `tolerance` is the half-width of the interval the
/// published number stands for.
struct CalibrationTarget {
    std::string table;
    std::string group;
    std::string statistic;
    double value{0.0};
    double tolerance{0.0};
};

/// The published characterization values the default configuration is fitted to.
std::vector<CalibrationTarget> published_targets();

/// Structural choices that the published tables do not pin down.
struct CalibrationKnobs {
    double base_defer_prob{0.06};
    double completion_prob{0.5};
    double reply_prob{0.15};
    double nondeferred_revisit_prob{0.5};
};

/// Solves the per-behaviour parameters so that label-level statistics of the
/// generated corpus match published_targets() in expectation. Throws ConfigError
/// when the targets cannot be met under the given knobs.
SynthConfig calibrated_config(const CalibrationKnobs& knobs = {});

/// Calibrated configuration with a strong planted dependence of the deferral
/// intent on body length and unhandled-message count.
SynthConfig planted_signal_config();

enum class CalibrationStatus : std::uint8_t { Pass, Fail, InsufficientData, Missing };
std::string_view to_string(CalibrationStatus s) noexcept;

struct CalibrationEntry {
    CalibrationTarget target;
    double measured{0.0};
    double ci_low{0.0};
    double ci_high{0.0};
    std::size_t n{0};
    CalibrationStatus status{CalibrationStatus::Missing};
};

struct CalibrationReport {
    std::vector<CalibrationEntry> entries;
    std::vector<std::string> notes;

    bool all_pass() const;
    const CalibrationEntry* find(std::string_view table, std::string_view group, std::string_view statistic) const;
};

struct CalibrationCheckOptions {
    Timestamp gap_threshold{600};
    std::size_t num_resamples{1000};
    double alpha{0.05};
    std::uint64_t seed{17};
};

/// Measures each target on the labelled corpus and marks it Pass when the
/// target interval [value - tolerance, value + tolerance] overlaps the bootstrap CI.
CalibrationReport check_calibration(const Corpus& corpus, const GroundTruth& truth,
                                    const std::vector<CalibrationTarget>& targets,
                                    const CalibrationCheckOptions& options = {});

void print_calibration(std::ostream& out, const CalibrationReport& report);

}  // namespace deferral
