#include "deferral/metrics.hpp"

#include "deferral/error.hpp"

namespace deferral {

Metrics metrics(std::span<const std::uint8_t> predictions, std::span<const std::uint8_t> labels) {
    if (predictions.size() != labels.size()) throw ValidationError("predictions and labels differ in length");
    Metrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] != 0, y = labels[i] != 0;
        if (p && y) ++m.tp;
        else if (p) ++m.fp;
        else if (y) ++m.fn;
        else ++m.tn;
    }
    m.precision = m.tp + m.fp == 0 ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    m.recall = m.tp + m.fn == 0 ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

}  // namespace deferral
