#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deferral/labeler.hpp"
#include "deferral/log_model.hpp"
#include "deferral/sessionizer.hpp"

namespace deferral {

struct FeatureColumn {
    std::string_view name;
    /// Row of the published feature table this column encodes; empty for helper columns.
    std::string_view table_row;
};

inline constexpr std::size_t kNumFeatures = 33;

/// Canonical column order.
const std::array<FeatureColumn, kNumFeatures>& feature_columns();
/// Throws LookupError.
std::size_t feature_index(std::string_view name);

using FeatureVector = std::array<double, kNumFeatures>;

struct ProfileOptions {
    double zero_inbox_threshold{0.75};   ///< share of read messages moved or deleted
    double zero_unread_threshold{0.90};  ///< share of delivered messages ever read
};

struct UserProfile {
    std::string user_id;
    std::int32_t mailbox_size_bucket{0};  ///< 0: <10, 1: 10-24, 2: 25-99, 3: >=100
    ManagementStyle management_style{ManagementStyle::Piler};
    std::int64_t delivered{0};
};

std::int32_t mailbox_size_bucket(std::int64_t delivered) noexcept;

/// Throws LookupError for an unknown user.
UserProfile infer_profile(std::string_view user_id, const CorpusIndex& index, const ProfileOptions& options = {});

using ProfileMap = std::map<std::string, UserProfile, std::less<>>;
ProfileMap infer_profiles(const CorpusIndex& index, const ProfileOptions& options = {});

/// Features of message m as of the end of its first-read session.
/// Throws DataError("no first read") for messages that were never read.
FeatureVector extract_features(std::size_t m, const LabelMap& labels, const Sessions& sessions,
                               const CorpusIndex& index, const ProfileMap& profiles);

struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<std::string> message_ids;
    std::vector<double> x;  ///< row-major, rows() x cols()
    std::vector<std::uint8_t> y;
    std::vector<double> weights;

    std::size_t rows() const noexcept { return message_ids.size(); }
    std::size_t cols() const noexcept { return feature_names.size(); }
    double at(std::size_t r, std::size_t c) const { return x[r * cols() + c]; }
    std::span<const double> row(std::size_t r) const { return {x.data() + r * cols(), cols()}; }

    /// Throws ValidationError when sizes disagree or a weight is not positive.
    void validate() const;
    /// Copy without the named columns. Unknown names are LookupErrors.
    Dataset without_columns(const std::vector<std::string>& names) const;
    /// Copy holding the given rows, in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;
};

/// One row per cohort message, in cohort order. `positive[i]` is the label of
/// cohort[i]. Throws DataError on an empty cohort, ValidationError on a
/// non-positive weight.
Dataset build_dataset(const std::vector<std::string>& cohort, const std::vector<bool>& positive,
                      const LabelMap& labels, const Sessions& sessions, const CorpusIndex& index,
                      const ProfileMap& profiles, double positive_weight = 10.0);

/// features.csv: message_id + feature columns. labels.csv / weights.csv: message_id + one column.
void write_features_csv(std::ostream& out, const Dataset& data);
void write_labels_csv(std::ostream& out, const Dataset& data);
void write_weights_csv(std::ostream& out, const Dataset& data);

/// Reads features.csv only; labels are zero and weights one.
Dataset read_features_csv(std::istream& features);
/// Reads and aligns the three files by message_id. Throws ParseError / IntegrityError.
Dataset read_dataset(std::istream& features, std::istream& labels, std::istream& weights);

}  // namespace deferral
