#pragma once

// Baseline admission forecasters and the per-hospital benchmark table.

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/epi.hpp"
#include "icuplan/forecast.hpp"
#include "icuplan/gp.hpp"
#include "icuplan/hgpcp.hpp"
#include "icuplan/synth.hpp"

namespace icu::evaluation {

struct ZeroMeanGpOptions {
  int samples = 200;
  std::uint64_t seed = 0;
  bool fit_noise = true;
  double noise = 1.0;  // starting value, or the fixed value when fit_noise is off
};

// Zero-mean GP on the day index, hyperparameters by marginal likelihood.
gp::GpModel fit_zero_mean_gp(const HospitalSeries& series, const ZeroMeanGpOptions& options = {});
// Mobility is accepted for interface symmetry and ignored.
ForecastDistribution baseline_zero_mean_gp(const HospitalSeries& series, const Eigen::MatrixXd& future_mobility,
                                           int horizon, const ZeroMeanGpOptions& options = {});

struct CompartmentalOptions {
  int starts = 64;
  int max_iterations = 1500;
  double dt = 0.25;
  std::uint64_t seed = 0;
};

struct CompartmentalFit {
  double beta = 0;  // per capita, constant over time
  epi::EpidemicParams params;
  double e0 = 0, i0 = 0;
  int start_day = 0;
  double sse = 0;
  bool converged = false;
  std::vector<double> fitted;    // days 1..t
  std::vector<double> forecast;  // days t+1..t+horizon

  ForecastDistribution distribution() const;
};

// Constant-contact SEIHR fitted by least squares with seeded multi-start
// Nelder-Mead. When no start converges the best point is still returned.
// `stream` names the random substream for the starts.
CompartmentalFit fit_compartmental(std::span<const double> admissions, double population, int horizon,
                                   const CompartmentalOptions& options = {}, std::string_view stream = "");
CompartmentalFit baseline_compartmental(const HospitalSeries& series, double population, int horizon,
                                        const CompartmentalOptions& options = {});

// ---------------------------------------------------------------- benchmark

// A method forecasts every hospital from its truncated history. Future
// mobility is the world's realized mobility over the horizon.
using Forecaster = std::function<std::vector<ForecastDistribution>(
    std::span<const HospitalSeries> history, std::span<const HospitalInfo> hospitals,
    std::span<const Eigen::MatrixXd> future_mobility, int horizon)>;

struct Method {
  std::string name;
  Forecaster run;
};

struct EvaluationDate {
  std::string regime;
  int origin = 0;  // last observed day
};

// Day with the largest national expected admissions (first on ties).
int national_peak_day(const synth::TrendWorld& world);
// pre-peak: peak-7, peak: peak-3, post-peak: peak+14.
std::vector<EvaluationDate> evaluation_dates(const synth::TrendWorld& world);

struct BenchmarkRow {
  std::string hospital_id;             // "national" for the aggregate row
  std::vector<std::vector<double>> mae;  // [date][method]
};

struct BenchmarkReport {
  int horizon = 7;
  std::vector<std::string> methods;
  std::vector<EvaluationDate> dates;
  std::vector<BenchmarkRow> rows;  // hospitals in world order, then national

  const BenchmarkRow& row(std::string_view hospital_id) const;
  double mae(std::string_view hospital_id, std::string_view regime, std::string_view method) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// The trend model fitted jointly on all histories, then forecast per hospital.
Method hgpcp_method(const hgpcp::HgpcpConfig& config = {}, int samples = 200, std::uint64_t seed = 1);
Method zero_mean_gp_method(const ZeroMeanGpOptions& options = {});
Method compartmental_method(const CompartmentalOptions& options = {});

BenchmarkReport benchmark_report(const synth::TrendWorld& world, std::span<const Method> methods,
                                 std::span<const EvaluationDate> dates, int horizon = 7);

}  // namespace icu::evaluation
