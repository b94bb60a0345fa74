#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "icuplan/errors.hpp"
#include "icuplan/hgpcp.hpp"
#include "icuplan/numeric.hpp"
#include "icuplan/synth.hpp"
#include "support/elbo_check.hpp"

using namespace icu;
using namespace icu::hgpcp;

namespace {

// One full-window fit of the reference world, shared by the slow cases.
struct Reference {
  synth::TrendWorld world;
  HgpcpModel model;
};

const Reference& reference() {
  static const Reference r = [] {
    Reference out;
    out.world = synth::generate_trend_world(synth::WorldConfig{});
    out.model = fit(out.world.series, out.world.hospitals);
    return out;
  }();
  return r;
}

synth::TrendWorld small_world(int hospitals, int days) {
  synth::WorldConfig c;
  c.n_hospitals = hospitals;
  c.days = days;
  c.n_patients = 10;
  return synth::generate_trend_world(c);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

ForecastDistribution two_by_two(int start, double a, double b, double c, double d) {
  MatrixXd s(2, 2);
  s << a, b, c, d;
  return ForecastDistribution::from_samples(start, s);
}

void check_well_formed(const ForecastDistribution& f) {
  CHECK(f.samples.allFinite());
  CHECK(f.samples.minCoeff() >= 0.0);
  for (int d = 0; d < f.horizon; ++d) {
    const auto i = static_cast<std::size_t>(d);
    CHECK(f.q05[i] <= f.q25[i]);
    CHECK(f.q25[i] <= f.q50[i]);
    CHECK(f.q50[i] <= f.q75[i]);
    CHECK(f.q75[i] <= f.q95[i]);
    CHECK(f.mean[i] == doctest::Approx(f.samples.col(d).mean()).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("untrained model returns the prior contact rate everywhere") {
  const HgpcpModel m = HgpcpModel::untrained(6);
  const MatrixXd mob = MatrixXd::Random(9, 6);
  const auto rate = contact_rate(m, mob);
  for (Eigen::Index d = 0; d < mob.rows(); ++d) CHECK(rate.mean()[d] == doctest::Approx(softplus(m.bias)));
  CHECK(softplus(m.bias) == doctest::Approx(m.config.initial_contact));
  CHECK_THROWS_AS(contact_rate(m, MatrixXd::Zero(3, 5)), InvalidArgument);
  CHECK_THROWS_AS(HgpcpModel::untrained(0), InvalidArgument);
}

TEST_CASE("identical mobility gives identical contact-rate marginals") {
  HgpcpModel m = HgpcpModel::untrained(2);
  m.weights << 0.8, -0.3;
  m.inducing_inputs = (MatrixXd(3, 2) << -0.5, 0.1, 0.0, 0.0, 0.4, -0.2).finished();
  m.inducing_values = (VectorXd(3) << -0.9, 0.2, 0.6).finished();
  MatrixXd mob(3, 2);
  mob << 0.3, -0.1, -0.2, 0.5, 0.3, -0.1;
  const auto rate = contact_rate(m, mob);
  CHECK(rate.mean()[0] == rate.mean()[2]);
  CHECK(rate.latent_covariance(0, 0) == rate.latent_covariance(2, 2));
  CHECK(rate.mean()[0] != rate.mean()[1]);
}

TEST_CASE("select_inducing picks distinct extreme rows") {
  MatrixXd rows(5, 1);
  rows << 0.0, 0.15, 0.3, 0.9, -0.8;
  const MatrixXd z = select_inducing(rows, 3);
  REQUIRE(z.rows() == 3);
  CHECK(z(0, 0) == -0.8);
  CHECK(z(1, 0) == 0.9);
  CHECK(z(2, 0) == 0.0);
  CHECK(select_inducing(MatrixXd::Zero(4, 2), 3).rows() == 1);
  CHECK(select_inducing(rows, 0).rows() == 0);
}

TEST_CASE("ELBO gradient matches central differences at random points") {
  const auto w = small_world(3, 16);
  std::vector<double> pops;
  for (const auto& h : w.hospitals) pops.push_back(h.population);
  for (std::uint64_t point = 0; point < 5; ++point) {
    const double rel = test_support::elbo_gradient_error(w.series, pops, point);
    CAPTURE(point);
    CHECK(rel <= 1e-3);
  }
}

TEST_CASE("all-zero admissions fit a near-zero epidemic") {
  HospitalSeries s;
  s.hospital_id = "Z";
  s.admissions.assign(30, 0.0);
  s.mobility = MatrixXd::Zero(30, 6);
  const std::vector<HospitalInfo> info{{"Z", 3e5}};
  HgpcpConfig c;
  c.steps = 300;
  const HgpcpModel m = fit(std::span(&s, 1), info, c);
  const auto prior = prior_admissions(m, "Z", s.mobility);
  CHECK(std::accumulate(prior.begin(), prior.end(), 0.0) / 30.0 <= 0.5);
  CHECK(m.final_elbo >= m.initial_elbo);
  CHECK(std::isfinite(m.final_elbo));
  CHECK(static_cast<int>(m.elbo_trace.size()) == c.steps);
}

TEST_CASE("fit rejects invalid datasets") {
  const auto w = small_world(2, 20);
  CHECK_THROWS_AS(fit(std::span<const HospitalSeries>{}, w.hospitals), InvalidArgument);
  std::vector<HospitalSeries> short_series{w.series[0].truncated(6)};
  CHECK_THROWS_AS(fit(short_series, w.hospitals), InvalidArgument);
  std::vector<HospitalInfo> missing{w.hospitals[1]};
  CHECK_THROWS_AS(fit(w.series, missing), NotFound);
  std::vector<HospitalSeries> mixed = w.series;
  mixed[1].mobility = MatrixXd::Zero(20, 5);
  CHECK_THROWS_AS(fit(mixed, w.hospitals), InvalidArgument);
}

TEST_CASE("forecast shape, determinism and errors") {
  const auto w = small_world(2, 24);
  HgpcpConfig c;
  c.steps = 150;
  const HgpcpModel m = fit(w.series, w.hospitals, c);
  const std::string id = w.series[0].hospital_id;
  const MatrixXd future = default_mobility(w.series[0], 10);

  const auto empty = forecast(m, id, MatrixXd(0, 6), 5, 3);
  CHECK(empty.horizon == 0);
  CHECK(empty.start_day == 24);
  CHECK(empty.mean.empty());

  const auto a = forecast(m, id, future, 1, 11);
  const auto b = forecast(m, id, future, 1, 11);
  CHECK(a.samples == b.samples);
  CHECK(a.mean == b.mean);
  CHECK(forecast(m, id, future, 1, 12).samples != a.samples);

  const auto f = forecast(m, id, future, 64, 1);
  CHECK(f.horizon == 10);
  CHECK(f.sample_count() == 64);
  CHECK(f.start_day == 24);
  check_well_formed(f);

  CHECK_THROWS_AS(forecast(m, "nope", future, 4, 1), NotFound);
  CHECK_THROWS_AS(forecast(m, id, future, 0, 1), InvalidArgument);
  CHECK_THROWS_AS(forecast(m, id, MatrixXd::Zero(3, 4), 4, 1), InvalidArgument);
}

TEST_CASE("aggregate of a single forecast is the forecast") {
  const auto f = two_by_two(5, 1, 2, 3, 7);
  const auto g = aggregate(std::span(&f, 1));
  CHECK(g.samples == f.samples);
  CHECK(g.mean == f.mean);
  CHECK(g.q50 == f.q50);
  CHECK(g.start_day == 5);
}

TEST_CASE("aggregate sums aligned samples") {
  const std::vector<ForecastDistribution> fs{two_by_two(5, 1, 2, 3, 4), two_by_two(5, 10, 20, 30, 40)};
  const auto g = aggregate(fs);
  MatrixXd expected(2, 2);
  for (int s = 0; s < 2; ++s)
    for (int d = 0; d < 2; ++d) expected(s, d) = fs[0].samples(s, d) + fs[1].samples(s, d);
  CHECK(g.samples == expected);
  CHECK(g.samples(0, 0) == 11.0);
  CHECK(g.samples(1, 1) == 44.0);
  for (std::size_t d = 0; d < 2; ++d) CHECK(g.mean[d] == doctest::Approx(fs[0].mean[d] + fs[1].mean[d]));

  const std::vector<ForecastDistribution> bad_horizon{two_by_two(5, 1, 2, 3, 4),
                                                      ForecastDistribution::from_samples(5, MatrixXd::Ones(2, 3))};
  CHECK_THROWS_AS(aggregate(bad_horizon), InvalidArgument);
  const std::vector<ForecastDistribution> bad_count{two_by_two(5, 1, 2, 3, 4),
                                                    ForecastDistribution::from_samples(5, MatrixXd::Ones(3, 2))};
  CHECK_THROWS_AS(aggregate(bad_count), InvalidArgument);
  CHECK_THROWS_AS(aggregate(std::span<const ForecastDistribution>{}), InvalidArgument);
}

TEST_CASE("aggregate mean is the sum of means over random forecasts") {
  Rng rng(4);
  std::vector<ForecastDistribution> fs;
  for (int i = 0; i < 4; ++i) {
    MatrixXd s = MatrixXd::NullaryExpr(50, 6, [&] { return 100.0 * uniform01(rng); });
    fs.push_back(ForecastDistribution::from_samples(12, s));
  }
  const auto g = aggregate(fs);
  check_well_formed(g);
  for (std::size_t d = 0; d < 6; ++d) {
    double sum = 0;
    for (const auto& f : fs) sum += f.mean[d];
    CHECK(g.mean[d] == doctest::Approx(sum).epsilon(1e-12));
  }
}

TEST_CASE("default mobility repeats the last-week mean") {
  HospitalSeries s;
  s.hospital_id = "A";
  s.admissions.assign(14, 1.0);
  s.mobility.resize(14, 2);
  for (int d = 0; d < 14; ++d) s.mobility.row(d).setConstant(d % 2 == 1 ? -0.7 : 0.0);
  // Days 8..14 hold four -0.7 entries and three zeros.
  const MatrixXd m = default_mobility(s, 3);
  REQUIRE(m.rows() == 3);
  for (Eigen::Index d = 0; d < 3; ++d) CHECK(m(d, 0) == doctest::Approx(-0.4));

  s.mobility.setConstant(0.25);
  CHECK(default_mobility(s, 5).isApproxToConstant(0.25));
  const MatrixXd one = default_mobility(s, 1), thirty = default_mobility(s, 30);
  CHECK(thirty.rows() == 30);
  for (Eigen::Index d = 0; d < 30; ++d) CHECK(thirty.row(d) == one.row(0));
  CHECK(default_mobility(s, 0).rows() == 0);
  CHECK_THROWS_AS(default_mobility(s.truncated(6), 3), InvalidArgument);
}

TEST_CASE("doubling the step budget does not lower the final ELBO") {
  const auto w = small_world(2, 25);
  HgpcpConfig c;
  c.steps = 200;
  const double short_run = fit(w.series, w.hospitals, c).final_elbo;
  c.steps = 400;
  const double long_run = fit(w.series, w.hospitals, c).final_elbo;
  CHECK(long_run >= short_run - 0.01 * std::abs(short_run));
}

TEST_CASE("reference world: contact rate and epidemic parameters are recovered") {
  const auto& r = reference();
  std::vector<double> predicted, truth;
  for (std::size_t h = 0; h < r.world.series.size(); ++h) {
    const auto rate = contact_rate(r.model, r.world.series[h].mobility).mean();
    for (Eigen::Index d = 0; d < rate.size(); ++d) {
      predicted.push_back(rate[d] / r.world.hospitals[h].population);
      truth.push_back(r.world.truth[h].beta[static_cast<std::size_t>(d)]);
    }
  }
  CHECK(correlation(predicted, truth) >= 0.9);

  int close = 0;
  for (std::size_t h = 0; h < r.world.truth.size(); ++h) {
    const auto p = r.model.hospitals[h].params();
    const auto& t = r.world.truth[h].params;
    const double ratio = (p.eta * p.gamma) / (t.eta * t.gamma);
    if (ratio <= 2.0 && ratio >= 0.5) ++close;
  }
  CHECK(close >= 14);
  CHECK(r.model.final_elbo >= r.model.initial_elbo);
}

TEST_CASE("reference world: severe lockdown never forecasts more than open mobility") {
  const auto& r = reference();
  for (std::size_t h = 0; h < r.world.series.size(); h += 4) {
    const auto& s = r.world.series[h];
    const MatrixXd lockdown = MatrixXd::Constant(30, 6, -0.9);
    const MatrixXd open = s.mobility.topRows(7).colwise().mean().replicate(30, 1);
    const auto closed = forecast(r.model, s.hospital_id, lockdown, 100, 5);
    const auto normal = forecast(r.model, s.hospital_id, open, 100, 5);
    check_well_formed(closed);
    const double a = std::accumulate(closed.mean.begin(), closed.mean.end(), 0.0);
    const double b = std::accumulate(normal.mean.begin(), normal.mean.end(), 0.0);
    CAPTURE(s.hospital_id);
    CHECK(a <= b);
  }
}

TEST_CASE("reference world: model JSON round-trips bit-exactly") {
  const auto& r = reference();
  const std::string text = r.model.to_json().dump();
  const HgpcpModel back = HgpcpModel::from_json(nlohmann::json::parse(text));
  CHECK(back.to_json().dump() == text);
  CHECK(back.bias == r.model.bias);
  CHECK(back.hospitals[3].q_mean == r.model.hospitals[3].q_mean);
  CHECK(back.config.to_json() == r.model.config.to_json());
  const auto& s = r.world.series[0];
  const MatrixXd future = default_mobility(s, 7);
  CHECK(forecast(back, s.hospital_id, future, 20, 2).samples == forecast(r.model, s.hospital_id, future, 20, 2).samples);

  nlohmann::json broken = nlohmann::json::parse(text);
  broken["manifest"]["schema_version"] = 99;
  CHECK_THROWS_AS(HgpcpModel::from_json(broken), InvalidArgument);
}
