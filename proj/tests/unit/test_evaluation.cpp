#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "icuplan/errors.hpp"
#include "icuplan/evaluation.hpp"
#include "icuplan/metrics.hpp"
#include "icuplan/rng.hpp"

using namespace icu;
using namespace icu::evaluation;
using Eigen::MatrixXd;

namespace {

// Exhaustive positive/negative pair count, ties scored one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

HospitalSeries flat_series(const std::string& id, int days, double value) {
  HospitalSeries s;
  s.hospital_id = id;
  s.admissions.assign(static_cast<std::size_t>(days), value);
  s.mobility = MatrixXd::Zero(days, 6);
  return s;
}

std::vector<double> constant_contact_curve(double population, int days) {
  epi::EpidemicParams p;
  p.alpha = 0.22;
  p.gamma = 0.2;
  p.eta = 0.08;
  p.population = population;
  const auto init = epi::CompartmentState::seeded(population, 20.0, 15.0);
  const std::vector<double> beta(static_cast<std::size_t>(days), 0.6 / population);
  return epi::integrate_ensemble({&init, 1}, {&p, 1}, beta, 0.25, days).daily_admissions;
}

Method constant_method(std::string name, double level) {
  return {std::move(name), [level](std::span<const HospitalSeries> history, std::span<const HospitalInfo>,
                                   std::span<const MatrixXd>, int horizon) {
            std::vector<ForecastDistribution> out;
            for (std::size_t h = 0; h < history.size(); ++h) {
              const std::vector<double> path(static_cast<std::size_t>(horizon), level * static_cast<double>(h + 1));
              out.push_back(ForecastDistribution::point(history[h].days(), path));
            }
            return out;
          }};
}

}  // namespace

TEST_CASE("AUC closed forms and the pair-count oracle") {
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(metrics::auc_roc(std::vector<double>{0.1, 0.2, 0.3, 0.4}, y) == 1.0);
  CHECK(metrics::auc_roc(std::vector<double>{0.4, 0.3, 0.2, 0.1}, y) == 0.0);
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  CHECK(pairwise_auc(s, y) == 0.75);
  CHECK(metrics::auc_roc(s, y) == 0.75);
  CHECK(metrics::auc_roc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
  CHECK_THROWS_AS(metrics::auc_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), InvalidArgument);
  CHECK_THROWS_AS(metrics::auc_roc(std::vector<double>{0.1}, std::vector<int>{1, 0}), InvalidArgument);
}

TEST_CASE("AUC matches pair counting and ignores monotone transforms") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(40);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(10.0 * uniform01(rng)) / 10.0;  // plenty of ties
      y[i] = i < 2 ? static_cast<int>(i) : (uniform01(rng) < 0.4 ? 1 : 0);
    }
    const double a = metrics::auc_roc(s, y);
    CHECK(a == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(metrics::auc_roc(t, y) == a);
  }
}

TEST_CASE("MAE closed forms and properties") {
  const std::vector<double> truth{3, 5, 8, 9, 7, 6, 4};
  CHECK(metrics::mae_forecast(truth, truth) == 0.0);
  std::vector<double> plus(truth), minus(truth);
  for (auto& v : plus) v += 1.0;
  for (auto& v : minus) v -= 1.0;
  CHECK(metrics::mae_forecast(truth, plus) == 1.0);
  CHECK(metrics::mae_forecast(truth, minus) == metrics::mae_forecast(truth, plus));
  CHECK(metrics::mae_forecast(truth, std::vector<double>{4, 4, 8, 11, 7, 5, 4}) == doctest::Approx(5.0 / 7.0));
  CHECK(metrics::mae_forecast(truth, std::vector<double>{4, 4, 8, 11, 7, 5, 4}) > 0.0);
  CHECK_THROWS_AS(metrics::mae_forecast(truth, std::vector<double>{1, 2}), InvalidArgument);
}

TEST_CASE("zero-mean GP extrapolates a constant history") {
  const auto s = flat_series("C", 20, 12.0);
  const auto f = baseline_zero_mean_gp(s, MatrixXd::Zero(3, 6), 3);
  REQUIRE(f.horizon == 3);
  CHECK(f.start_day == 20);
  for (double m : f.mean) CHECK(std::abs(m - 12.0) <= 1.2);
  CHECK(f.samples.minCoeff() >= 0.0);
  CHECK(baseline_zero_mean_gp(s, MatrixXd::Zero(0, 6), 0).horizon == 0);
  CHECK_THROWS_AS(baseline_zero_mean_gp(s.truncated(2), MatrixXd::Zero(3, 6), 3), InvalidArgument);
}

TEST_CASE("noise-free zero-mean GP interpolates the last observation") {
  HospitalSeries s = flat_series("I", 12, 0.0);
  const std::vector<double> a{1, 3, 2, 6, 9, 7, 12, 15, 11, 18, 22, 19};
  s.admissions = a;
  ZeroMeanGpOptions o;
  o.fit_noise = false;
  o.noise = 1e-8;
  const auto m = fit_zero_mean_gp(s, o);
  MatrixXd x(1, 1);
  x << 12.0;
  CHECK(gp::posterior(m, x).mean[0] == doctest::Approx(19.0).epsilon(1e-6));
  CHECK(m.noise_variance == 1e-8);
}

TEST_CASE("zero-mean GP is deterministic under a fixed seed") {
  const auto w = synth::generate_trend_world(synth::WorldConfig{});
  const auto h = w.series[2].truncated(25);
  const auto a = baseline_zero_mean_gp(h, MatrixXd::Zero(7, 6), 7);
  const auto b = baseline_zero_mean_gp(h, MatrixXd::Zero(7, 6), 7);
  CHECK(a.samples == b.samples);
  ZeroMeanGpOptions o;
  o.seed = 9;
  CHECK(baseline_zero_mean_gp(h, MatrixXd::Zero(7, 6), 7, o).samples != a.samples);
}

TEST_CASE("compartmental baseline on an empty epidemic forecasts near zero") {
  const auto fit = baseline_compartmental(flat_series("Z", 30, 0.0), 3e5, 7);
  REQUIRE(fit.forecast.size() == 7);
  CHECK(std::accumulate(fit.forecast.begin(), fit.forecast.end(), 0.0) / 7.0 <= 0.5);
  CHECK(fit.fitted.size() == 30);
  CHECK(fit.start_day == 30);
}

TEST_CASE("compartmental baseline recovers its own noiseless curve") {
  const double population = 4e5;
  const auto curve = constant_contact_curve(population, 47);
  const std::vector<double> observed(curve.begin(), curve.begin() + 40);
  const auto fit = fit_compartmental(observed, population, 7, {}, "self");
  double err = 0;
  for (int d = 0; d < 40; ++d) err += std::abs(fit.fitted[static_cast<std::size_t>(d)] - curve[static_cast<std::size_t>(d)]);
  CHECK(err / 40.0 <= 0.1);
  std::vector<double> tail(curve.begin() + 40, curve.end());
  CHECK(metrics::mae_forecast(tail, fit.forecast) <= 0.1);
  CHECK(fit.beta * population > 0.0);
}

TEST_CASE("compartmental baseline is deterministic and validates inputs") {
  const auto w = synth::generate_trend_world(synth::WorldConfig{});
  const auto h = w.series[4].truncated(24);
  CompartmentalOptions o;
  o.starts = 8;
  const auto a = baseline_compartmental(h, w.hospitals[4].population, 7, o);
  const auto b = baseline_compartmental(h, w.hospitals[4].population, 7, o);
  CHECK(a.forecast == b.forecast);
  CHECK(a.sse == b.sse);
  CHECK(a.converged == b.converged);
  const auto d = a.distribution();
  CHECK(d.sample_count() == 1);
  CHECK(d.mean == a.forecast);
  CHECK_THROWS_AS(baseline_compartmental(h, 0.0, 7), InvalidArgument);
  CHECK_THROWS_AS(baseline_compartmental(h, 1e5, -1), InvalidArgument);
  CHECK_THROWS_AS(fit_compartmental(std::vector<double>{1.0, -2.0}, 1e5, 3), InvalidArgument);
}

TEST_CASE("evaluation dates follow the national expected peak") {
  const auto w = synth::generate_trend_world(synth::WorldConfig{});
  const std::size_t days = w.truth[0].expected_admissions.size();
  int peak = 0;
  double best = -1;
  for (std::size_t d = 0; d < days; ++d) {
    double total = 0;
    for (const auto& t : w.truth) total += t.expected_admissions[d];
    if (total > best) {
      best = total;
      peak = static_cast<int>(d) + 1;
    }
  }
  CHECK(national_peak_day(w) == peak);
  const auto dates = evaluation_dates(w);
  REQUIRE(dates.size() == 3);
  CHECK(dates[0].regime == "pre-peak");
  CHECK(dates[0].origin == peak - 7);
  CHECK(dates[1].origin == peak - 3);
  CHECK(dates[2].origin == peak + 14);
}

TEST_CASE("benchmark report rows and the national aggregate") {
  synth::WorldConfig c;
  c.n_hospitals = 2;
  c.n_patients = 10;
  const auto w = synth::generate_trend_world(c);
  const std::vector<Method> methods{constant_method("a", 10.0), constant_method("b", 10.0)};
  const std::vector<EvaluationDate> dates{{"early", 20}, {"late", 40}};
  const auto report = benchmark_report(w, methods, dates, 7);

  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows.back().hospital_id == "national");
  for (const auto& r : report.rows)
    for (std::size_t di = 0; di < dates.size(); ++di) CHECK(r.mae[di][0] == r.mae[di][1]);

  for (const auto& date : dates) {
    double national = 0;
    for (int d = 0; d < 7; ++d) {
      const auto i = static_cast<std::size_t>(date.origin + d);
      national += std::abs(w.series[0].admissions[i] + w.series[1].admissions[i] - 30.0);
    }
    CHECK(report.mae("national", date.regime, "a") == doctest::Approx(national / 7.0));
    double first = 0;
    for (int d = 0; d < 7; ++d)
      first += std::abs(w.series[0].admissions[static_cast<std::size_t>(date.origin + d)] - 10.0);
    CHECK(report.mae(w.series[0].hospital_id, date.regime, "b") == doctest::Approx(first / 7.0));
  }

  const auto j = report.to_json();
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][2]["mae"]["late"]["a"].get<double>() == report.mae("national", "late", "a"));
  const std::string text = report.to_text();
  CHECK(text.find("national") != std::string::npos);
  CHECK(text.find("early/a") != std::string::npos);

  CHECK_THROWS_AS(report.mae("national", "nope", "a"), NotFound);
  CHECK_THROWS_AS(report.row("H99"), NotFound);
  const std::vector<EvaluationDate> outside{{"x", 66}};
  CHECK_THROWS_AS(benchmark_report(w, methods, outside, 7), InvalidArgument);
}
