#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace icu {

inline double softplus(double x) noexcept {
  return x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x)));
}

inline double inverse_softplus(double y) noexcept {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

// Order-statistic quantile of an ascending sample: the ceil(p*n)-th smallest
// value (nearest-rank definition), so q is always an observed value.
inline double order_statistic(std::span<const double> sorted, double p) {
  const auto n = static_cast<long>(sorted.size());
  long rank = static_cast<long>(std::ceil(p * static_cast<double>(n)));
  rank = std::clamp(rank, 1L, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace icu
