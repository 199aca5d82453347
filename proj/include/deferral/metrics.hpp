#pragma once

#include <cstdint>
#include <span>

namespace deferral {

struct Metrics {
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
    std::size_t tp{0}, fp{0}, fn{0}, tn{0};
};

/// P = TP/(TP+FP), R = TP/(TP+FN), each 0 when its denominator is 0; F1 = 0 when P+R = 0.
/// Throws ValidationError when the spans differ in length.
Metrics metrics(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels);

}  // namespace deferral
