#include "deferral/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "deferral/error.hpp"

namespace deferral {

namespace {

void check_params(std::size_t num_resamples, double alpha) {
    if (num_resamples < 100) throw ValidationError("bootstrap needs at least 100 resamples");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
}

Interval percentile_interval(std::vector<double>& stats, double alpha) {
    std::sort(stats.begin(), stats.end());
    return {sorted_quantile(stats, alpha / 2.0), sorted_quantile(stats, 1.0 - alpha / 2.0)};
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_ci(std::span<const double> samples, const Statistic& statistic, std::size_t num_resamples,
                      double alpha, std::uint64_t seed, bool* degenerate) {
    check_params(num_resamples, alpha);
    const double plug_in = statistic(samples);
    if (samples.size() < 2) {
        if (degenerate) *degenerate = true;
        return {plug_in, plug_in};
    }
    if (degenerate) *degenerate = false;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    std::vector<double> resample(samples.size());
    std::vector<double> stats(num_resamples);
    for (auto& s : stats) {
        for (auto& x : resample) x = samples[pick(rng)];
        s = statistic(resample);
    }
    return percentile_interval(stats, alpha);
}

Interval bootstrap_mean_ci(std::span<const double> samples, std::size_t num_resamples, double alpha,
                           std::uint64_t seed, bool* degenerate) {
    check_params(num_resamples, alpha);
    if (samples.size() < 2) {
        if (degenerate) *degenerate = true;
        const double m = mean(samples);
        return {m, m};
    }
    if (degenerate) *degenerate = false;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    std::vector<double> stats(num_resamples);
    const auto n = static_cast<double>(samples.size());
    for (auto& s : stats) {
        double sum = 0.0;
        for (std::size_t i = 0; i < samples.size(); ++i) sum += samples[pick(rng)];
        s = sum / n;
    }
    return percentile_interval(stats, alpha);
}

Interval bootstrap_proportion_ci(std::size_t successes, std::size_t n, std::size_t num_resamples, double alpha,
                                 std::uint64_t seed, bool* degenerate) {
    check_params(num_resamples, alpha);
    if (successes > n) throw ValidationError("successes exceed sample size");
    if (n < 2) {
        if (degenerate) *degenerate = true;
        const double p = n == 0 ? 0.0 : static_cast<double>(successes);
        return {p, p};
    }
    if (degenerate) *degenerate = false;
    const double p = static_cast<double>(successes) / static_cast<double>(n);
    std::mt19937_64 rng(seed);
    std::binomial_distribution<std::int64_t> draw(static_cast<std::int64_t>(n), p);
    std::vector<double> stats(num_resamples);
    for (auto& s : stats) s = static_cast<double>(draw(rng)) / static_cast<double>(n);
    return percentile_interval(stats, alpha);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix(seed ^ splitmix(h));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix(seed ^ splitmix(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace deferral
