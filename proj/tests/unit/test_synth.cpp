#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "icuplan/errors.hpp"
#include "icuplan/io.hpp"
#include "icuplan/metrics.hpp"
#include "icuplan/numeric.hpp"
#include "icuplan/synth.hpp"

using namespace icu;
using namespace icu::synth;

namespace {

WorldConfig small_config() {
  WorldConfig c;
  c.n_hospitals = 3;
  c.n_patients = 500;
  return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("icuplan_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("Poisson draws at rate 12 average to 12 within three standard errors") {
  Rng rng = make_rng(7, "poisson");
  double sum = 0;
  for (int i = 0; i < 1000; ++i) sum += draw_poisson(12.0, rng);
  const double mean = sum / 1000, se = std::sqrt(12.0 / 1000);
  CHECK(std::abs(mean - 12.0) <= 3 * se);
}

TEST_CASE("no initial infections means no admissions") {
  WorldConfig c = small_config();
  c.seed_min = c.seed_max = 0;
  const auto w = generate_trend_world(c);
  for (const auto& s : w.series)
    for (double a : s.admissions) CHECK(a == 0.0);
}

TEST_CASE("same seed reproduces the world, another seed does not") {
  const auto a = generate_trend_world(small_config());
  const auto b = generate_trend_world(small_config());
  WorldConfig other = small_config();
  other.seed = 2;
  const auto c = generate_trend_world(other);
  for (std::size_t h = 0; h < a.series.size(); ++h) {
    CHECK(a.series[h].admissions == b.series[h].admissions);
    CHECK(a.series[h].mobility == b.series[h].mobility);
    CHECK(a.truth[h].beta == b.truth[h].beta);
  }
  CHECK(a.truth[0].beta != c.truth[0].beta);
  const auto pa = generate_patient_world(small_config(), a.hospitals);
  const auto pb = generate_patient_world(small_config(), a.hospitals);
  for (std::size_t i = 0; i < pa.patients.size(); ++i) {
    CHECK(pa.patients[i].events == pb.patients[i].events);
    CHECK(pa.patients[i].censor_day == pb.patients[i].censor_day);
  }
}

TEST_CASE("mobility drops at the lockdown day and beta follows the softplus map") {
  const WorldConfig c = small_config();
  const auto w = generate_trend_world(c);
  for (std::size_t h = 0; h < w.series.size(); ++h) {
    const auto& s = w.series[h];
    const int ld = w.truth[h].lockdown_day;
    const Eigen::VectorXd before = s.mobility.topRows(ld - 1).colwise().mean();
    const Eigen::VectorXd after = s.mobility.bottomRows(c.days - ld + 1).colwise().mean();
    for (int k = 0; k < 5; ++k) CHECK(after[k] < before[k] - 0.2);
    CHECK(after[5] > before[5]);
    for (int d = 0; d < c.days; ++d) {
      double z = c.contact_weights[0];
      for (int k = 0; k < c.k_mobility; ++k) z += c.contact_weights[static_cast<std::size_t>(k) + 1] * s.mobility(d, k);
      CHECK(w.truth[h].beta[static_cast<std::size_t>(d)] * w.hospitals[h].population == doctest::Approx(std::log1p(std::exp(z))));
    }
  }
}

TEST_CASE("noiseless mobility ramps linearly into the lockdown level") {
  for (int ramp : {0, 4}) {
    WorldConfig c = small_config();
    c.mobility_noise = 0.0;
    c.ramp_days = ramp;
    const auto w = generate_trend_world(c);
    const auto& s = w.series[0];
    const int ld = w.truth[0].lockdown_day;
    const double full = s.mobility(c.days - 1, 0);
    CHECK(full < -0.4);
    for (int d = 1; d <= c.days; ++d) {
      double expected = d >= ld ? full : 0.0;
      if (ramp > 0 && d < ld && d > ld - ramp) expected = full * (d - ld + ramp) / ramp;
      CHECK(s.mobility(d - 1, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  WorldConfig bad = small_config();
  bad.ramp_days = -1;
  CHECK_THROWS_AS(generate_trend_world(bad), InvalidArgument);
}

TEST_CASE("reference world produces a visible wave") {
  const auto w = generate_trend_world(WorldConfig{});
  for (const auto& t : w.truth) {
    const double peak = *std::max_element(t.expected_admissions.begin(), t.expected_admissions.end());
    CHECK(peak > 5.0);
    CHECK(peak < 500.0);
  }
}

TEST_CASE("zero coefficients and a constant intercept give the declared day-1 rate") {
  WorldConfig c = small_config();
  c.n_patients = 10000;
  const std::size_t width = c.feature_schema().encoded_size();
  for (auto& h : c.hazards) {
    h.intercept.assign(static_cast<std::size_t>(c.horizon), logit(0.05));
    h.coefficients.assign(width, 0.0);
  }
  const auto hospitals = generate_trend_world(c).hospitals;
  const auto w = generate_patient_world(c, hospitals);
  double events = 0;
  for (const auto& p : w.patients) events += p.event(Outcome::icu) == 1;
  const double rate = events / c.n_patients, se = std::sqrt(0.05 * 0.95 / c.n_patients);
  CHECK(std::abs(rate - 0.05) <= 3 * se);
}

TEST_CASE("missingness and censoring extremes") {
  WorldConfig c = small_config();
  c.missing_rate = 0;
  c.censor_rate = 1;
  c.censor_max_day = 1;
  const auto hospitals = generate_trend_world(c).hospitals;
  const auto w = generate_patient_world(c, hospitals);
  for (const auto& p : w.patients) {
    for (double v : p.features) CHECK_FALSE(is_missing(v));
    CHECK(p.censor_day == 1);
    p.validate(w.schema);
  }
  c.missing_rate = 0.3;
  c.censor_rate = 0.3;
  c.censor_max_day = 30;
  c.n_patients = 4000;
  const auto m = generate_patient_world(c, hospitals);
  double missing = 0, cells = 0;
  for (const auto& p : m.patients) {
    for (double v : p.features) missing += is_missing(v), cells += 1;
    p.validate(m.schema);
  }
  CHECK(missing / cells == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("no two outcomes share a day") {
  WorldConfig c = small_config();
  c.n_patients = 5000;
  const auto w = generate_patient_world(c, generate_trend_world(c).hospitals);
  for (const auto& p : w.patients)
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b)
        if (p.events[a] && p.events[b]) CHECK(*p.events[a] != *p.events[b]);
}

TEST_CASE("brute-force empirical hazard matches the generator hazard") {
  WorldConfig c;
  c.n_hospitals = 1;
  c.n_patients = 100000;
  const auto w = generate_patient_world(c, generate_trend_world(c).hospitals);
  std::vector<double> enc(w.schema.encoded_size());
  for (Outcome o : {Outcome::icu, Outcome::ventilation}) {
    for (int tau : {1, 3, 7}) {
      double at_risk = 0, events = 0, expected = 0, var = 0;
      for (std::size_t i = 0; i < w.patients.size(); ++i) {
        const auto& p = w.patients[i];
        const auto& e = p.event(o);
        if (p.censor_day < tau || (e && *e < tau)) continue;
        if (o == Outcome::ventilation && p.event(Outcome::icu) == tau) continue;  // day already taken
        w.schema.encode(w.complete_features[i], enc.data());
        const double h = w.truth[static_cast<std::size_t>(o)].hazard(tau, enc.data());
        at_risk += 1;
        expected += h;
        var += h * (1 - h);
        events += e == tau;
      }
      INFO(outcome_name(o) << " tau=" << tau);
      CHECK(std::abs(events - expected) <= 3 * std::sqrt(var));
    }
  }
}

TEST_CASE("Bayes-optimal AUC at day 7 is at least 0.85") {
  WorldConfig c;
  c.n_hospitals = 1;
  c.n_patients = 20000;
  const auto w = generate_patient_world(c, generate_trend_world(c).hospitals);
  std::vector<double> enc(w.schema.encoded_size()), scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < w.patients.size(); ++i) {
    const auto& p = w.patients[i];
    const auto& e = p.event(Outcome::icu);
    if (p.censor_day < 7 || (e && *e < 7)) continue;
    w.schema.encode(w.complete_features[i], enc.data());
    scores.push_back(w.truth[0].hazard(7, enc.data()));
    labels.push_back(e == 7);
  }
  const double auc = metrics::auc_roc(scores, labels);
  MESSAGE("Bayes AUC at day 7: " << auc << " over " << labels.size() << " at risk");
  CHECK(auc >= 0.85);
}

TEST_CASE("tables round-trip through CSV") {
  const WorldConfig c = small_config();
  const auto trend = generate_trend_world(c);
  const auto patients = generate_patient_world(c, trend.hospitals);
  const auto dir = scratch_dir("roundtrip");
  io::write_world(dir, trend, patients);
  const auto t = io::read_trend(dir);
  REQUIRE(t.series.size() == trend.series.size());
  for (std::size_t h = 0; h < t.series.size(); ++h) {
    CHECK(t.hospitals[h].hospital_id == trend.hospitals[h].hospital_id);
    CHECK(t.hospitals[h].population == trend.hospitals[h].population);
    CHECK(t.hospitals[h].region == trend.hospitals[h].region);
    CHECK(t.series[h].admissions == trend.series[h].admissions);
    CHECK(t.series[h].mobility == trend.series[h].mobility);
  }
  const auto p = io::read_patients(dir / "patients.csv");
  CHECK(p.schema == patients.schema);
  REQUIRE(p.patients.size() == patients.patients.size());
  for (std::size_t i = 0; i < p.patients.size(); ++i) {
    const auto& a = p.patients[i];
    const auto& b = patients.patients[i];
    CHECK(a.events == b.events);
    CHECK(a.censor_day == b.censor_day);
    for (std::size_t f = 0; f < a.features.size(); ++f)
      CHECK((is_missing(a.features[f]) ? is_missing(b.features[f]) : a.features[f] == b.features[f]));
  }
  CHECK(std::filesystem::exists(dir / "truth" / "trend.csv"));
}

TEST_CASE("malformed tables report row and column") {
  const auto dir = scratch_dir("malformed");
  const auto trend = generate_trend_world(small_config());
  io::write_trend(dir, trend.hospitals, trend.series);
  {
    std::ofstream a(dir / "admissions.csv", std::ios::app);
    a << "H01,999,abc\n";
  }
  try {
    io::read_trend(dir);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.column() == 3);
    CHECK(e.row() == 3 * 70 + 2);
  }
}
