#pragma once

// Sample-based admission forecasts shared by the trend model, the baselines
// and the service layer.

#include <Eigen/Dense>
#include <json.hpp>
#include <span>
#include <vector>

namespace icu {

struct ForecastDistribution {
  int start_day = 0;  // last observed day; forecasts cover start_day+1 .. start_day+horizon
  int horizon = 0;
  Eigen::MatrixXd samples;  // S x horizon
  std::vector<double> mean, q05, q25, q50, q75, q95;

  static ForecastDistribution from_samples(int start_day, Eigen::MatrixXd samples);
  // Degenerate distribution with a single sample path.
  static ForecastDistribution point(int start_day, std::span<const double> path);

  int sample_count() const noexcept { return static_cast<int>(samples.rows()); }
  void validate() const;
  nlohmann::json to_json(bool with_samples = true) const;
  static ForecastDistribution from_json(const nlohmann::json& j);
};

// Sample-wise sum of aligned forecasts.
ForecastDistribution aggregate(std::span<const ForecastDistribution> forecasts);

}  // namespace icu
