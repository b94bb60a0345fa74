#include "icuplan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "icuplan/errors.hpp"

namespace icu::metrics {

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks over tie groups.
  double rank_sum = 0, positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (std::isnan(scores[order[k]])) throw InvalidArgument("scores must not be NaN");
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        positives += 1;
      } else if (labels[order[k]] != 0) {
        throw InvalidArgument("labels must be 0 or 1");
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("AUC needs both classes");
  return (rank_sum - positives * (positives + 1) / 2) / (positives * negatives);
}

double brier(std::span<const double> p, std::span<const int> labels) {
  if (p.size() != labels.size() || p.empty()) throw InvalidArgument("Brier needs equal, nonempty inputs");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - labels[i]) * (p[i] - labels[i]);
  return s / static_cast<double>(p.size());
}

double mae_forecast(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size() || truth.empty()) throw InvalidArgument("forecast and truth differ in length");
  double s = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(truth[i] - predicted[i]);
  return s / static_cast<double>(truth.size());
}

}  // namespace icu::metrics
