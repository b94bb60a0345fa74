#pragma once

// Seeded synthetic world: hospitals, mobility, ground-truth contact rates and
// epidemics, noisy admissions, and patient cohorts with outcome times drawn
// from a known discrete-time hazard. All randomness flows from one seed
// through named substreams ("mobility", "epidemics", "admissions",
// "patients").

#include <array>
#include <cstdint>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/epi.hpp"
#include "icuplan/rng.hpp"

namespace icu::synth {

// h*(tau | x) = logistic(intercept[tau-1] + coefficients . encode(x)).
struct HazardTruth {
  std::vector<double> intercept;
  std::vector<double> coefficients;

  double hazard(int tau, const double* encoded) const;
};

struct WorldConfig {
  // Trend world.
  int n_hospitals = 20;
  int n_regions = 4;
  int days = 70;
  int k_mobility = 6;
  double population_min = 2e5;
  double population_max = 8e5;
  // Normalized contact rate beta * C = softplus(w0 + w . m).
  std::vector<double> contact_weights{0.0, 0.7, 0.7, 0.7, 0.7, 0.7, -1.0};
  int lockdown_day = 28;
  int lockdown_jitter = 4;
  // Mobility declines linearly over this many days, reaching the full drop
  // on the lockdown day.
  int ramp_days = 10;
  std::vector<double> mobility_drop{-0.55, -0.35, -0.45, -0.6, -0.5, 0.2};
  double drop_scale_min = 0.9;
  double drop_scale_max = 1.3;
  double mobility_noise = 0.02;
  double seed_min = 15;
  double seed_max = 50;
  double alpha_min = 0.18, alpha_max = 0.25;
  double gamma_min = 0.18, gamma_max = 0.25;
  double eta_min = 0.06, eta_max = 0.12;
  double truth_dt = 0.01;

  // Patient world.
  int n_patients = 5000;
  int numeric_features = 6;
  int categorical_features = 2;
  int categorical_levels = 3;
  double missing_rate = 0.02;
  double censor_rate = 0.3;
  int censor_max_day = 30;
  int horizon = 30;
  // Empty entries are filled with the built-in reference hazards.
  std::array<HazardTruth, 4> hazards{};

  std::uint64_t seed = 1;

  void validate() const;
  FeatureSchema feature_schema() const;
  HazardTruth hazard_truth(Outcome o) const;
};

struct HospitalTruth {
  std::string hospital_id;
  epi::EpidemicParams params;
  double e0 = 0, i0 = 0;
  int lockdown_day = 0;
  std::vector<double> beta;                 // per day
  std::vector<double> expected_admissions;  // Poisson rate per day
};

struct TrendWorld {
  std::vector<HospitalInfo> hospitals;
  std::vector<HospitalSeries> series;
  std::vector<HospitalTruth> truth;
};

struct PatientWorld {
  FeatureSchema schema;
  std::vector<PatientRecord> patients;
  std::vector<std::vector<double>> complete_features;  // before missingness
  std::array<HazardTruth, 4> truth;
};

TrendWorld generate_trend_world(const WorldConfig& config);
PatientWorld generate_patient_world(const WorldConfig& config, const std::vector<HospitalInfo>& hospitals);

int draw_poisson(double rate, Rng& rng);

}  // namespace icu::synth
