#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>

namespace deferral {

struct Interval {
    double low{0.0};
    double high{0.0};
};

using Statistic = std::function<double(std::span<const double>)>;

double mean(std::span<const double> xs);

/// Linear-interpolation quantile (R type 7) of an ascending-sorted sample.
double sorted_quantile(std::span<const double> sorted, double q);

/// Percentile bootstrap interval at level 1 - alpha. Resamples `samples` with
/// replacement `num_resamples` times. With fewer than two samples the interval
/// collapses onto the plug-in value and `degenerate` (if given) is set.
/// Throws ValidationError if num_resamples < 100 or alpha is outside (0,1).
Interval bootstrap_ci(std::span<const double> samples, const Statistic& statistic,
                      std::size_t num_resamples = 1000, double alpha = 0.05, std::uint64_t seed = 1,
                      bool* degenerate = nullptr);

/// bootstrap_ci with the sample mean as statistic, without materialising resamples.
Interval bootstrap_mean_ci(std::span<const double> samples, std::size_t num_resamples = 1000,
                           double alpha = 0.05, std::uint64_t seed = 1, bool* degenerate = nullptr);

/// Percentile bootstrap for a proportion of 0/1 outcomes. The resampled success
/// count of n Bernoulli records is Binomial(n, k/n), so it is drawn directly.
Interval bootstrap_proportion_ci(std::size_t successes, std::size_t n, std::size_t num_resamples = 1000,
                                 double alpha = 0.05, std::uint64_t seed = 1, bool* degenerate = nullptr);

/// Stable 64-bit mixing of a seed with a string tag (FNV-1a + splitmix finaliser).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace deferral
