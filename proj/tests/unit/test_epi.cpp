#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "icuplan/epi.hpp"
#include "icuplan/errors.hpp"
#include "../support/oracles.hpp"

using namespace icu::epi;
using test_support::rk4_daily;

namespace {

const EpidemicParams kRef{0.2, 0.1, 0.3, 1000.0};
const CompartmentState kRefState{990, 5, 5, 0, 0};
constexpr double kRefBeta = 3e-4;

Trajectory run(double dt, int days) {
  return integrate_euler(kRefState, ContactRateSeries::from_daily(std::vector<double>(days, kRefBeta), dt), kRef, days);
}

}  // namespace

TEST_CASE("derivatives without transmission") {
  const CompartmentState x{900, 40, 30, 20, 10};
  const auto d = seihr_derivatives(x, 0.0, kRef);
  CHECK(d.ds == 0.0);
  CHECK(d.de == doctest::Approx(-0.2 * 40));
  CHECK(d.di == doctest::Approx(0.2 * 40 - 0.1 * 30));
  CHECK(d.dh == doctest::Approx(0.3 * 0.1 * 30));
  CHECK(d.dr == doctest::Approx(0.7 * 0.1 * 30));
}

TEST_CASE("disease-free equilibrium has zero derivatives") {
  const auto d = seihr_derivatives({1000, 0, 0, 0, 0}, 5e-4, kRef);
  CHECK(d.ds == 0.0);
  CHECK(d.de == 0.0);
  CHECK(d.di == 0.0);
  CHECK(d.dh == 0.0);
  CHECK(d.dr == 0.0);
}

TEST_CASE("derivatives by direct substitution") {
  // beta*S*I = 3e-4*990*5 = 1.485; alpha*E = 1.0; gamma*I = 0.5.
  const auto d = seihr_derivatives(kRefState, kRefBeta, kRef);
  CHECK(d.ds == doctest::Approx(-1.485).epsilon(1e-12));
  CHECK(d.de == doctest::Approx(0.485).epsilon(1e-12));
  CHECK(d.di == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.dh == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(d.dr == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(std::abs(d.ds + d.de + d.di + d.dh + d.dr) < 1e-12);
}

TEST_CASE("derivative input validation") {
  CHECK_THROWS_AS(seihr_derivatives(kRefState, -1e-4, kRef), icu::InvalidArgument);
  CHECK_THROWS_AS(seihr_derivatives({990, -5, 15, 0, 0}, kRefBeta, kRef), icu::InvalidArgument);
  CHECK_THROWS_AS(seihr_derivatives({990, 5, 5, 0, 1}, kRefBeta, kRef), icu::InvalidArgument);
  CHECK_THROWS_AS(seihr_derivatives(kRefState, kRefBeta, EpidemicParams{0.0, 0.1, 0.3, 1000}), icu::InvalidArgument);
  CHECK_THROWS_AS(seihr_derivatives(kRefState, kRefBeta, EpidemicParams{0.2, 0.1, 1.3, 1000}), icu::InvalidArgument);
}

TEST_CASE("zero transmission and no infection gives a constant trajectory") {
  const CompartmentState x0{1000, 0, 0, 0, 0};
  const auto traj = integrate_euler(x0, ContactRateSeries::from_daily(std::vector<double>(30, 0.0), 0.25), kRef, 30);
  REQUIRE(traj.states.size() == 30 * 4 + 1);
  for (const auto& x : traj.states) {
    CHECK(x.s == 1000.0);
    CHECK(x.e == 0.0);
    CHECK(x.i == 0.0);
  }
}

TEST_CASE("one Euler step is state plus dt times derivative") {
  const auto traj = integrate_euler(kRefState, ContactRateSeries{{kRefBeta}, 1.0}, kRef, 1);
  const auto d = seihr_derivatives(kRefState, kRefBeta, kRef);
  const auto& x = traj.states[1];
  CHECK(x.s == kRefState.s + d.ds);
  CHECK(x.e == kRefState.e + d.de);
  CHECK(x.i == kRefState.i + d.di);
  CHECK(x.h == kRefState.h + d.dh);
  CHECK(x.r == kRefState.r + d.dr);
}

TEST_CASE("60-day accuracy against the fine-step reference") {
  const auto ref = rk4_daily({990, 5, 5, 0, 0}, kRefBeta, 0.2, 0.1, 0.3, 1e-3, 60);
  const auto traj = run(0.25, 60);
  const double h60 = traj.at_day(60).h;
  CHECK(std::abs(h60 - ref[60][3]) / ref[60][3] <= 0.01);
}

TEST_CASE("halving dt at least 1.8x reduces the max error") {
  const auto ref = rk4_daily({990, 5, 5, 0, 0}, kRefBeta, 0.2, 0.1, 0.3, 1e-3, 60);
  auto max_err = [&](double dt) {
    const auto t = run(dt, 60);
    double m = 0;
    for (int d = 0; d <= 60; ++d) {
      const auto& x = t.at_day(d);
      const std::array<double, 5> v{x.s, x.e, x.i, x.h, x.r};
      for (int c = 0; c < 5; ++c) m = std::max(m, std::abs(v[c] - ref[d][c]));
    }
    return m;
  };
  CHECK(max_err(0.25) / max_err(0.125) >= 1.8);
}

TEST_CASE("integration errors") {
  CHECK_THROWS_AS(integrate_euler(kRefState, ContactRateSeries::from_daily(std::vector<double>(5, kRefBeta), 0.25), kRef, 6),
                  icu::InvalidArgument);
  CHECK_THROWS_AS(integrate_euler(kRefState, ContactRateSeries{std::vector<double>(10, kRefBeta), 0.3}, kRef, 1),
                  icu::InvalidArgument);
  ContactRateSeries bad = ContactRateSeries::from_daily(std::vector<double>(3, kRefBeta), 0.25);
  bad.values[5] = std::nan("");
  try {
    integrate_euler(kRefState, bad, kRef, 3);
    FAIL("expected NumericalError");
  } catch (const icu::NumericalError& e) {
    CHECK(e.step() == 5);
  }
}

TEST_CASE("conservation and monotone H, R on random parameter sets") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double c = std::pow(10.0, 3 + 3 * u(rng));
    const EpidemicParams p{0.05 + u(rng), 0.05 + u(rng), u(rng), c};
    const double r0 = 0.5 + 4 * u(rng);
    const auto traj = integrate_euler(CompartmentState::seeded(c, 1 + 20 * u(rng), 1 + 20 * u(rng)),
                                      ContactRateSeries::from_daily(std::vector<double>(60, r0 * p.gamma / c), 0.25), p, 60);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      CHECK(std::abs(traj.states[k].total() - c) <= 1e-9 * c);
      if (k > 0 && !traj.any_clamped()) {
        CHECK(traj.states[k].h >= traj.states[k - 1].h);
        CHECK(traj.states[k].r >= traj.states[k - 1].r);
      }
    }
  }
}

TEST_CASE("clamping keeps compartments nonnegative and conserves mass") {
  // A huge contact rate makes explicit Euler overshoot S.
  const EpidemicParams p{0.9, 0.9, 0.5, 1000};
  const auto traj = integrate_euler(CompartmentState::seeded(1000, 100, 400),
                                    ContactRateSeries::from_daily(std::vector<double>(10, 0.05), 1.0), p, 10);
  CHECK(traj.any_clamped());
  for (const auto& x : traj.states) {
    CHECK(x.s >= 0);
    CHECK(x.e >= 0);
    CHECK(x.i >= 0);
    CHECK(std::abs(x.total() - 1000) <= 1e-9 * 1000);
  }
}

TEST_CASE("daily admission prior") {
  SUBCASE("disease free is all zero") {
    const auto traj = integrate_euler({1000, 0, 0, 0, 0}, ContactRateSeries::from_daily(std::vector<double>(20, 1e-3), 0.25), kRef, 20);
    for (double v : daily_admission_prior(traj)) CHECK(v == 0.0);
  }
  SUBCASE("telescoping sum") {
    const auto traj = run(0.25, 40);
    const auto daily = daily_admission_prior(traj);
    REQUIRE(daily.size() == 40);
    double sum = 0;
    for (double v : daily) {
      CHECK(v >= 0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(traj.at_day(40).h - traj.at_day(0).h).epsilon(1e-12));
  }
  SUBCASE("day one is the four within-day increments") {
    const auto traj = run(0.25, 1);
    double inc = 0;
    for (int k = 0; k < 4; ++k) inc += traj.states[k + 1].h - traj.states[k].h;
    const double day1 = daily_admission_prior(traj)[0];
    CHECK(day1 == doctest::Approx(inc).epsilon(1e-12));
    const auto ref = rk4_daily({990, 5, 5, 0, 0}, kRefBeta, 0.2, 0.1, 0.3, 1e-3, 1);
    CHECK(std::abs(day1 - (ref[1][3] - ref[0][3])) / (ref[1][3] - ref[0][3]) < 0.02);
  }
}

TEST_CASE("ensemble integration equals per-lane scalar integration exactly") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int days = 45;
  const std::size_t lanes = 11;
  std::vector<CompartmentState> init;
  std::vector<EpidemicParams> params;
  std::vector<double> beta(days * lanes);
  for (std::size_t j = 0; j < lanes; ++j) {
    const double c = 1e4 * (1 + u(rng));
    params.push_back({0.1 + 0.3 * u(rng), 0.1 + 0.3 * u(rng), 0.1 * u(rng), c});
    init.push_back(CompartmentState::seeded(c, 10 * u(rng), 10 * u(rng)));
    for (int d = 0; d < days; ++d) beta[d * lanes + j] = (0.2 + 0.6 * u(rng)) / c;
  }
  // One lane with an enormous rate to exercise clamping.
  for (int d = 0; d < days; ++d) beta[d * lanes + 3] = 5.0 / params[3].population;
  const auto ens = integrate_ensemble(init, params, beta, 0.25, days);
  for (std::size_t j = 0; j < lanes; ++j) {
    std::vector<double> daily(days);
    for (int d = 0; d < days; ++d) daily[d] = beta[d * lanes + j];
    const auto traj = integrate_euler(init[j], ContactRateSeries::from_daily(daily, 0.25), params[j], days);
    const auto prior = daily_admission_prior(traj);
    CHECK(static_cast<bool>(ens.clamped[j]) == traj.any_clamped());
    for (int d = 1; d <= days; ++d) CHECK(ens.at(d, j) == prior[d - 1]);
  }
}
