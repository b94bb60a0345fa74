#pragma once

// Central-difference oracle for the trend-model ELBO gradient.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "icuplan/hgpcp.hpp"

namespace test_support {

// Relative error ||g - fd|| / ||fd|| at a random point near the initial
// model, with the same Monte Carlo draws for every evaluation.
inline double elbo_gradient_error(std::span<const icu::HospitalSeries> series, std::span<const double> populations,
                                  std::uint64_t point) {
  using Eigen::VectorXd;
  const icu::hgpcp::HgpcpConfig config;
  Eigen::Index rows = 0;
  for (const auto& s : series) rows += s.mobility.rows();
  Eigen::MatrixXd pooled(rows, series.front().k());
  rows = 0;
  for (const auto& s : series) {
    pooled.middleRows(rows, s.mobility.rows()) = s.mobility;
    rows += s.mobility.rows();
  }
  const icu::hgpcp::ElboObjective objective(series, populations, config,
                                            icu::hgpcp::select_inducing(pooled, config.inducing_points));
  icu::Rng rng = icu::make_rng(point, "elbo-check");
  VectorXd theta = objective.pack(objective.initial_model());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.2 * icu::standard_normal(rng);
  const auto draws = objective.draw(4, rng);

  VectorXd grad;
  objective.value(theta, draws, &grad);
  VectorXd fd(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
    VectorXd up = theta, down = theta;
    up[i] += h;
    down[i] -= h;
    fd[i] = (objective.value(up, draws) - objective.value(down, draws)) / (2.0 * h);
  }
  return (grad - fd).norm() / fd.norm();
}

}  // namespace test_support
