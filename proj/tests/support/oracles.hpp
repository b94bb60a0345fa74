#pragma once

// Reference implementations written independently of the library code paths:
// a fine-step RK4 integrator, a dense elementwise RBF kernel and the slice
// membership conditions spelled out per patient.

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/gp.hpp"
#include "icuplan/rng.hpp"

namespace test_support {

// Daily states of the five-compartment model under a constant contact rate.
inline std::vector<std::array<double, 5>> rk4_daily(std::array<double, 5> x, double beta, double a, double g,
                                                    double eta, double dt, int days) {
  auto f = [&](const std::array<double, 5>& y) {
    const double inf = beta * y[0] * y[2];
    return std::array<double, 5>{-inf, inf - a * y[1], a * y[1] - g * y[2], eta * g * y[2], (1 - eta) * g * y[2]};
  };
  const int n = static_cast<int>(std::lround(1.0 / dt));
  std::vector<std::array<double, 5>> out{x};
  for (int k = 0; k < days * n; ++k) {
    auto k1 = f(x);
    std::array<double, 5> y;
    for (int c = 0; c < 5; ++c) y[c] = x[c] + dt / 2 * k1[c];
    auto k2 = f(y);
    for (int c = 0; c < 5; ++c) y[c] = x[c] + dt / 2 * k2[c];
    auto k3 = f(y);
    for (int c = 0; c < 5; ++c) y[c] = x[c] + dt * k3[c];
    auto k4 = f(y);
    for (int c = 0; c < 5; ++c) x[c] += dt / 6 * (k1[c] + 2 * k2[c] + 2 * k3[c] + k4[c]);
    if ((k + 1) % n == 0) out.push_back(x);
  }
  return out;
}

inline double rbf(const icu::gp::RbfKernel& k, const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double s = 0;
  for (Eigen::Index d = 0; d < a.size(); ++d) s += std::pow((a[d] - b[d]) / k.lengthscales[d], 2);
  return k.signal_variance * std::exp(-0.5 * s);
}

inline Eigen::MatrixXd dense_kernel(const icu::gp::RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = rbf(k, a.row(i), b.row(j));
  return out;
}

inline icu::PatientRecord toy_patient(const std::string& id, std::optional<int> icu_day, int censor) {
  icu::PatientRecord p;
  p.patient_id = id;
  p.hospital_id = "H01";
  p.features = {0.0};
  p.events[0] = icu_day;
  p.censor_day = censor;
  return p;
}

// At risk through day tau - 1 and still observed on day tau.
inline bool in_slice(const icu::PatientRecord& p, icu::Outcome o, int tau) {
  if (p.censor_day < tau) return false;
  for (int d = 1; d < tau; ++d)
    if (p.event(o) == d) return false;
  return true;
}

inline std::vector<icu::PatientRecord> random_toy_dataset(icu::Rng& rng, int n, int horizon) {
  std::uniform_int_distribution<int> day(1, horizon), coin(0, 2);
  std::vector<icu::PatientRecord> out;
  for (int i = 0; i < n; ++i) {
    icu::PatientRecord p = toy_patient("p" + std::to_string(i), std::nullopt, day(rng));
    for (auto& e : p.events)
      if (coin(rng) == 0) e = std::uniform_int_distribution<int>(1, p.censor_day)(rng);
    out.push_back(p);
  }
  return out;
}

}  // namespace test_support
