#pragma once

#include <span>
#include <vector>

namespace icu::metrics {

// Rank-based AUC with tied scores counted as half. Throws InvalidArgument
// unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

double brier(std::span<const double> probabilities, std::span<const int> labels);

// Mean absolute per-day deviation.
double mae_forecast(std::span<const double> truth, std::span<const double> predicted);

}  // namespace icu::metrics
