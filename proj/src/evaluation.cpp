#include "icuplan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "icuplan/errors.hpp"
#include "icuplan/metrics.hpp"
#include "icuplan/numeric.hpp"
#include "icuplan/optim.hpp"
#include "icuplan/rng.hpp"

namespace icu::evaluation {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd day_column(int first, int count) {
  MatrixXd x(count, 1);
  for (int d = 0; d < count; ++d) x(d, 0) = first + d;
  return x;
}

struct CmParams {
  double beta_scaled, alpha, gamma, eta, e0, i0;
};

CmParams unpack_cm(const std::vector<double>& x) {
  return {std::exp(x[0]), std::exp(x[1]), std::exp(x[2]), sigmoid(x[3]), std::exp(x[4]), std::exp(x[5])};
}

std::vector<double> run_cm(const CmParams& p, double population, double dt, int days) {
  epi::EpidemicParams ep;
  ep.alpha = p.alpha;
  ep.gamma = p.gamma;
  ep.eta = p.eta;
  ep.population = population;
  const epi::CompartmentState init = epi::CompartmentState::seeded(population, p.e0, p.i0);
  const std::vector<double> beta(static_cast<std::size_t>(days), p.beta_scaled / population);
  return epi::integrate_ensemble({&init, 1}, {&ep, 1}, beta, dt, days).daily_admissions;
}

}  // namespace

gp::GpModel fit_zero_mean_gp(const HospitalSeries& series, const ZeroMeanGpOptions& options) {
  series.validate();
  if (series.days() < 3) throw InvalidArgument("zero-mean GP baseline needs at least 3 observations");
  if (!(options.noise > 0)) throw InvalidArgument("noise must be positive");
  const int t = series.days();
  gp::GpModel m;
  m.train_inputs = day_column(1, t);
  m.train_targets = Eigen::Map<const VectorXd>(series.admissions.data(), t);
  const double second_moment = m.train_targets.squaredNorm() / t;
  m.kernel = gp::RbfKernel::isotropic(1, 7.0, std::max(second_moment, 1.0));
  m.noise_variance = options.noise;
  m.prior_mean = gp::zero_mean();
  gp::HyperFitOptions fit;
  fit.fit_noise = options.fit_noise;
  fit.min_noise = 1e-6;
  fit.min_lengthscale = 0.5;
  fit.max_lengthscale = 1e3;
  return gp::fit_hyperparameters(std::move(m), fit);
}

ForecastDistribution baseline_zero_mean_gp(const HospitalSeries& series, const MatrixXd& /*future_mobility*/,
                                           int horizon, const ZeroMeanGpOptions& options) {
  if (horizon < 0) throw InvalidArgument("horizon must be nonnegative");
  if (options.samples < 1) throw InvalidArgument("at least one sample is required");
  const gp::GpModel m = fit_zero_mean_gp(series, options);
  const int t = series.days();
  if (horizon == 0) return ForecastDistribution::from_samples(t, MatrixXd(options.samples, 0));
  const gp::PosteriorGaussian post = gp::posterior(m, day_column(t + 1, horizon));
  Rng rng = make_rng(options.seed, "baseline/gp/" + series.hospital_id);
  MatrixXd draws = gp::sample(post, options.samples, rng);
  const double sd = std::sqrt(m.noise_variance);
  for (Eigen::Index s = 0; s < draws.rows(); ++s)
    for (Eigen::Index d = 0; d < draws.cols(); ++d) draws(s, d) = std::max(draws(s, d) + sd * standard_normal(rng), 0.0);
  return ForecastDistribution::from_samples(t, std::move(draws));
}

ForecastDistribution CompartmentalFit::distribution() const { return ForecastDistribution::point(start_day, forecast); }

CompartmentalFit fit_compartmental(std::span<const double> admissions, double population, int horizon,
                                   const CompartmentalOptions& options, std::string_view stream) {
  if (admissions.empty()) throw InvalidArgument("compartmental baseline needs observations");
  for (double a : admissions)
    if (!(a >= 0) || !std::isfinite(a)) throw InvalidArgument("admissions must be finite and nonnegative");
  if (!(population > 0)) throw InvalidArgument("population must be positive");
  if (horizon < 0) throw InvalidArgument("horizon must be nonnegative");
  if (options.starts < 1) throw InvalidArgument("at least one start is required");
  const int t = static_cast<int>(admissions.size());

  auto sse = [&](const std::vector<double>& x) {
    try {
      const auto a = run_cm(unpack_cm(x), population, options.dt, t);
      double s = 0.0;
      for (int d = 0; d < t; ++d) {
        const double r = a[static_cast<std::size_t>(d)] - admissions[static_cast<std::size_t>(d)];
        s += r * r;
      }
      return s;
    } catch (const Error&) {
      return 1e300;
    }
  };

  Rng rng = make_rng(options.seed, "baseline/cm/" + std::string(stream));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  optim::MinimizeResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (int s = 0; s < options.starts; ++s) {
    const std::vector<double> x0{std::log(0.1 + 1.4 * u01(rng)),
                                 std::log(0.1 + 0.4 * u01(rng)),
                                 std::log(0.1 + 0.4 * u01(rng)),
                                 logit(0.01 + 0.29 * u01(rng)),
                                 std::log(200.0) * u01(rng),
                                 std::log(200.0) * u01(rng)};
    auto res = optim::nelder_mead(sse, x0, std::vector<double>(6, 0.5), options.max_iterations, 1e-6);
    if (res.value < best.value || (res.value == best.value && res.converged && !best.converged)) best = res;
  }

  const CmParams p = unpack_cm(best.x);
  CompartmentalFit fit;
  fit.beta = p.beta_scaled / population;
  fit.params.alpha = p.alpha;
  fit.params.gamma = p.gamma;
  fit.params.eta = p.eta;
  fit.params.population = population;
  fit.e0 = p.e0;
  fit.i0 = p.i0;
  fit.start_day = t;
  fit.sse = best.value;
  fit.converged = best.converged;
  const auto a = run_cm(p, population, options.dt, t + horizon);
  fit.fitted.assign(a.begin(), a.begin() + t);
  fit.forecast.assign(a.begin() + t, a.end());
  return fit;
}

CompartmentalFit baseline_compartmental(const HospitalSeries& series, double population, int horizon,
                                        const CompartmentalOptions& options) {
  series.validate();
  return fit_compartmental(series.admissions, population, horizon, options, series.hospital_id);
}

// ---------------------------------------------------------------- benchmark

int national_peak_day(const synth::TrendWorld& world) {
  if (world.truth.empty()) throw InvalidArgument("world has no hospitals");
  const std::size_t days = world.truth.front().expected_admissions.size();
  int peak = 1;
  double best = -1.0;
  for (std::size_t d = 0; d < days; ++d) {
    double total = 0.0;
    for (const auto& h : world.truth) total += h.expected_admissions[d];
    if (total > best) {
      best = total;
      peak = static_cast<int>(d) + 1;
    }
  }
  return peak;
}

std::vector<EvaluationDate> evaluation_dates(const synth::TrendWorld& world) {
  const int peak = national_peak_day(world);
  return {{"pre-peak", peak - 7}, {"peak", peak - 3}, {"post-peak", peak + 14}};
}

const BenchmarkRow& BenchmarkReport::row(std::string_view hospital_id) const {
  for (const auto& r : rows)
    if (r.hospital_id == hospital_id) return r;
  throw NotFound("no benchmark row for " + std::string(hospital_id));
}

double BenchmarkReport::mae(std::string_view hospital_id, std::string_view regime, std::string_view method) const {
  const auto di = std::find_if(dates.begin(), dates.end(), [&](const auto& d) { return d.regime == regime; });
  const auto mi = std::find(methods.begin(), methods.end(), method);
  if (di == dates.end() || mi == methods.end()) throw NotFound("unknown regime or method");
  return row(hospital_id).mae[static_cast<std::size_t>(di - dates.begin())][static_cast<std::size_t>(mi - methods.begin())];
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json ds = nlohmann::json::array();
  for (const auto& d : dates) ds.push_back({{"regime", d.regime}, {"origin", d.origin}});
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (std::size_t di = 0; di < dates.size(); ++di)
      for (std::size_t mi = 0; mi < methods.size(); ++mi) cells[dates[di].regime][methods[mi]] = r.mae[di][mi];
    rs.push_back({{"hospital_id", r.hospital_id}, {"mae", cells}});
  }
  return {{"metric", "mae"}, {"horizon", horizon}, {"methods", methods}, {"dates", ds}, {"rows", rs}};
}

std::string BenchmarkReport::to_text() const {
  std::vector<std::string> headers{"hospital"};
  for (const auto& d : dates)
    for (const auto& m : methods) headers.push_back(d.regime + "/" + m);
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line{r.hospital_id};
    for (std::size_t di = 0; di < dates.size(); ++di)
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", r.mae[di][mi]);
        line.emplace_back(buf);
      }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    width[c] = headers[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto emit = [&](const std::vector<std::string>& line, std::string& out) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::string pad(width[c] - line[c].size(), ' ');
      out += c == 0 ? line[c] + pad : "  " + pad + line[c];
    }
    out += '\n';
  };
  std::string out;
  emit(headers, out);
  for (const auto& line : cells) emit(line, out);
  return out;
}

BenchmarkReport benchmark_report(const synth::TrendWorld& world, std::span<const Method> methods,
                                 std::span<const EvaluationDate> dates, int horizon) {
  if (horizon < 1) throw InvalidArgument("horizon must be positive");
  BenchmarkReport report;
  report.horizon = horizon;
  for (const auto& m : methods) report.methods.push_back(m.name);
  report.dates.assign(dates.begin(), dates.end());
  const std::size_t n = world.series.size();
  for (const auto& s : world.series) report.rows.push_back({s.hospital_id, {}});
  report.rows.push_back({"national", {}});

  for (const auto& date : dates) {
    std::vector<HospitalSeries> history;
    std::vector<MatrixXd> future;
    for (const auto& s : world.series) {
      if (date.origin < 1 || date.origin + horizon > s.days())
        throw InvalidArgument("evaluation window falls outside the observed range");
      history.push_back(s.truncated(date.origin));
      future.push_back(s.mobility.middleRows(date.origin, horizon));
    }
    for (auto& r : report.rows) r.mae.emplace_back();

    for (const auto& method : methods) {
      const auto forecasts = method.run(history, world.hospitals, future, horizon);
      if (forecasts.size() != n) throw InvalidArgument("method " + method.name + " returned the wrong forecast count");
      std::vector<double> national_truth(static_cast<std::size_t>(horizon), 0.0);
      std::vector<double> national_pred(static_cast<std::size_t>(horizon), 0.0);
      for (std::size_t h = 0; h < n; ++h) {
        if (forecasts[h].horizon != horizon) throw InvalidArgument("forecast horizon mismatch from " + method.name);
        const auto first = world.series[h].admissions.begin() + date.origin;
        const std::vector<double> truth(first, first + horizon);
        report.rows[h].mae.back().push_back(metrics::mae_forecast(truth, forecasts[h].mean));
        for (std::size_t d = 0; d < truth.size(); ++d) {
          national_truth[d] += truth[d];
          national_pred[d] += forecasts[h].mean[d];
        }
      }
      report.rows[n].mae.back().push_back(metrics::mae_forecast(national_truth, national_pred));
    }
  }
  return report;
}

Method hgpcp_method(const hgpcp::HgpcpConfig& config, int samples, std::uint64_t seed) {
  return {"HGPCP", [config, samples, seed](std::span<const HospitalSeries> history, std::span<const HospitalInfo> hospitals,
                                           std::span<const Eigen::MatrixXd> future, int) {
            const auto model = hgpcp::fit(history, hospitals, config);
            std::vector<ForecastDistribution> out;
            for (std::size_t h = 0; h < history.size(); ++h)
              out.push_back(hgpcp::forecast(model, history[h].hospital_id, future[h], samples, seed));
            return out;
          }};
}

Method zero_mean_gp_method(const ZeroMeanGpOptions& options) {
  return {"zero-mean GP", [options](std::span<const HospitalSeries> history, std::span<const HospitalInfo>,
                                    std::span<const Eigen::MatrixXd> future, int horizon) {
            std::vector<ForecastDistribution> out;
            for (std::size_t h = 0; h < history.size(); ++h)
              out.push_back(baseline_zero_mean_gp(history[h], future[h], horizon, options));
            return out;
          }};
}

Method compartmental_method(const CompartmentalOptions& options) {
  return {"compartmental", [options](std::span<const HospitalSeries> history, std::span<const HospitalInfo> hospitals,
                                     std::span<const Eigen::MatrixXd>, int horizon) {
            std::vector<ForecastDistribution> out;
            for (std::size_t h = 0; h < history.size(); ++h)
              out.push_back(baseline_compartmental(history[h], hospitals[h].population, horizon, options).distribution());
            return out;
          }};
}

}  // namespace icu::evaluation
