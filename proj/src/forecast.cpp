#include "icuplan/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"
#include "json_eigen.hpp"

namespace icu {

ForecastDistribution ForecastDistribution::from_samples(int start_day, Eigen::MatrixXd samples) {
  if (start_day < 0) throw InvalidArgument("start day must be nonnegative");
  if (samples.rows() < 1 && samples.cols() > 0) throw InvalidArgument("forecast needs at least one sample");
  ForecastDistribution f;
  f.start_day = start_day;
  f.horizon = static_cast<int>(samples.cols());
  f.samples = std::move(samples);
  const auto t = static_cast<std::size_t>(f.horizon);
  for (auto* v : {&f.mean, &f.q05, &f.q25, &f.q50, &f.q75, &f.q95}) v->assign(t, 0.0);
  std::vector<double> col(static_cast<std::size_t>(f.samples.rows()));
  for (std::size_t d = 0; d < t; ++d) {
    const auto c = static_cast<Eigen::Index>(d);
    for (Eigen::Index s = 0; s < f.samples.rows(); ++s) {
      const double x = f.samples(s, c);
      if (!std::isfinite(x)) throw NumericalError("non-finite forecast sample", static_cast<long>(d));
      col[static_cast<std::size_t>(s)] = x;
    }
    f.mean[d] = mean_of(col);
    std::sort(col.begin(), col.end());
    f.q05[d] = order_statistic(col, 0.05);
    f.q25[d] = order_statistic(col, 0.25);
    f.q50[d] = order_statistic(col, 0.50);
    f.q75[d] = order_statistic(col, 0.75);
    f.q95[d] = order_statistic(col, 0.95);
  }
  return f;
}

ForecastDistribution ForecastDistribution::point(int start_day, std::span<const double> path) {
  Eigen::MatrixXd s(1, static_cast<Eigen::Index>(path.size()));
  for (std::size_t d = 0; d < path.size(); ++d) s(0, static_cast<Eigen::Index>(d)) = path[d];
  return from_samples(start_day, std::move(s));
}

void ForecastDistribution::validate() const {
  if (samples.cols() != horizon) throw InvalidArgument("sample matrix does not match the horizon");
  for (const auto* v : {&mean, &q05, &q25, &q50, &q75, &q95})
    if (static_cast<int>(v->size()) != horizon) throw InvalidArgument("summary length does not match the horizon");
}

nlohmann::json ForecastDistribution::to_json(bool with_samples) const {
  nlohmann::json j = {{"start_day", start_day}, {"horizon", horizon}, {"sample_count", sample_count()},
                      {"mean", mean},           {"q05", q05},         {"q25", q25},
                      {"q50", q50},             {"q75", q75},         {"q95", q95}};
  if (with_samples) j["samples"] = detail::matrix_json(samples);
  return j;
}

ForecastDistribution ForecastDistribution::from_json(const nlohmann::json& j) {
  if (j.contains("samples")) return from_samples(j.at("start_day").get<int>(), detail::json_matrix(j.at("samples")));
  ForecastDistribution f;
  f.start_day = j.at("start_day").get<int>();
  f.horizon = j.at("horizon").get<int>();
  f.samples.resize(0, f.horizon);
  f.mean = j.at("mean").get<std::vector<double>>();
  f.q05 = j.at("q05").get<std::vector<double>>();
  f.q25 = j.at("q25").get<std::vector<double>>();
  f.q50 = j.at("q50").get<std::vector<double>>();
  f.q75 = j.at("q75").get<std::vector<double>>();
  f.q95 = j.at("q95").get<std::vector<double>>();
  f.validate();
  return f;
}

ForecastDistribution aggregate(std::span<const ForecastDistribution> forecasts) {
  if (forecasts.empty()) throw InvalidArgument("nothing to aggregate");
  Eigen::MatrixXd total = forecasts.front().samples;
  for (const auto& f : forecasts.subspan(1)) {
    if (f.horizon != forecasts.front().horizon || f.samples.rows() != total.rows())
      throw InvalidArgument("forecasts must share horizon and sample count");
    if (f.start_day != forecasts.front().start_day) throw InvalidArgument("forecasts must share the start day");
    total += f.samples;
  }
  return ForecastDistribution::from_samples(forecasts.front().start_day, std::move(total));
}

}  // namespace icu
