#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "geaf/error.hpp"

namespace geaf {

/// Classification metrics on thresholded 0/1 predictions, positive class 1.
struct MetricsReport {
    double accuracy = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport compute_metrics(std::span<const int> labels, std::span<const int> predicted) {
    if (labels.size() != predicted.size())
        throw Error("metrics: length mismatch (" + std::to_string(labels.size()) + " labels, " +
                    std::to_string(predicted.size()) + " predictions)");
    if (labels.empty()) throw Error("metrics: empty input");

    MetricsReport m;
    double abs_err = 0.0;
    double sq_err = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predicted[i];
        if ((y != 0 && y != 1) || (p != 0 && p != 1)) throw Error("metrics: labels must be 0 or 1");
        if (y == 1 && p == 1) ++m.tp;
        if (y == 0 && p == 1) ++m.fp;
        if (y == 0 && p == 0) ++m.tn;
        if (y == 1 && p == 0) ++m.fn;
        const double e = static_cast<double>(y - p);
        abs_err += std::abs(e);
        sq_err += e * e;
    }
    const auto n = static_cast<double>(labels.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.mae = abs_err / n;
    m.rmse = std::sqrt(sq_err / n);
    const std::size_t denom = 2 * m.tp + m.fp + m.fn;
    m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom);
    return m;
}

inline double accuracy(std::span<const int> labels, std::span<const int> predicted) {
    return compute_metrics(labels, predicted).accuracy;
}

enum class FitnessMode : std::uint8_t { product, test_f1 };

inline std::string_view to_string(FitnessMode m) { return m == FitnessMode::product ? "product" : "test_f1"; }

/// Validation accuracy times test F1.
inline double fitness(double validation_accuracy, double test_f1) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(validation_accuracy) || !in_unit(test_f1)) throw Error("fitness: arguments must lie in [0,1]");
    return validation_accuracy * test_f1;
}

inline double fitness(FitnessMode mode, double validation_accuracy, double test_f1) {
    const double product = fitness(validation_accuracy, test_f1);
    return mode == FitnessMode::product ? product : test_f1;
}

}  // namespace geaf
