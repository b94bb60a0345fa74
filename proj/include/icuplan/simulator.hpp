#pragma once

// Agent-based ICU demand simulation: forecast admissions, sample patients
// from the empirical cohort, and roll per-day hazards into ICU counters.

#include <Eigen/Dense>
#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icuplan/data.hpp"
#include "icuplan/hgpcp.hpp"
#include "icuplan/risk.hpp"
#include "icuplan/rng.hpp"

namespace icu::sim {

using MatrixXi = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

enum class Resolution { hospital, region, national };
std::string_view resolution_name(Resolution r);
Resolution parse_resolution(std::string_view name);

enum class MobilityMode { constant_extrapolation, user_series };
std::string_view mobility_mode_name(MobilityMode m);
MobilityMode parse_mobility_mode(std::string_view name);

struct ScenarioSpec {
  Resolution resolution = Resolution::national;
  std::string target_id = "national";
  int horizon = 30;
  MobilityMode mobility_mode = MobilityMode::constant_extrapolation;
  std::optional<Eigen::MatrixXd> mobility_series;  // horizon x K or longer
  int repetitions = 100;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioSpec from_json(const nlohmann::json& j);
};

// Hospital ids covered by a target, in the order of `hospitals`. Throws
// NotFound when the target matches nothing.
std::vector<std::string> scope(std::span<const HospitalInfo> hospitals, Resolution resolution,
                               std::string_view target_id);

// Uniform resampling distribution over the feature rows of the patients in scope.
struct EmpiricalCohort {
  FeatureSchema schema;
  std::vector<std::vector<double>> rows;

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t draw_index(Rng& rng) const;
  const std::vector<double>& draw(Rng& rng) const { return rows[draw_index(rng)]; }
};

EmpiricalCohort empirical_distribution(const std::vector<PatientRecord>& patients, const FeatureSchema& schema,
                                       std::span<const HospitalInfo> hospitals, Resolution resolution,
                                       std::string_view target_id);

using HazardSet = std::map<Outcome, risk::HazardModel>;

// Daily hazards per cohort row, rows x tau_max, one matrix per outcome.
struct CohortHazards {
  Eigen::MatrixXd icu, mortality, discharge, ventilation;

  Eigen::Index rows() const noexcept { return icu.rows(); }
  void validate() const;
};

CohortHazards cohort_hazards(const FeatureSchema& schema, const std::vector<std::vector<double>>& rows,
                             const HazardSet& hazards);

// Patients already admitted and not yet in ICU, with known features.
struct CurrentPatients {
  CohortHazards hazards;
  std::vector<int> days_since_admission;  // one per row, >= 0
};

struct DaySummary {
  std::vector<double> mean, q05, q50, q95;
};

// Per-day mean and order-statistic quantiles over the rows.
DaySummary summarize(const MatrixXi& per_repetition);

struct SimulatedDemand {
  int horizon = 0;
  // repetitions x horizon; column d is day d+1 after the forecast origin.
  MatrixXi icu_inflow, icu_outflow, ventilation_starts, net_occupancy;
  // Part of icu_inflow contributed by patients already in hospital.
  MatrixXi current_icu_inflow;
  DaySummary inflow_summary, outflow_summary, ventilation_summary, occupancy_summary;

  int repetitions() const noexcept { return static_cast<int>(icu_inflow.rows()); }
  void validate() const;
  nlohmann::json to_json(bool per_repetition = true) const;
  static SimulatedDemand from_json(const nlohmann::json& j);
};

// Core loop. Repetition r uses arrival row r mod S and its own substream of
// `seed`; arrivals are rounded half-to-even and floored at zero.
SimulatedDemand simulate_arrivals(const Eigen::MatrixXd& arrival_paths, const CohortHazards& cohort,
                                  int repetitions, std::uint64_t seed, const CurrentPatients* current = nullptr);

// Forecasts admissions for every hospital in scope (one aligned sample per
// repetition), then runs the core loop.
SimulatedDemand simulate(const ScenarioSpec& spec, const hgpcp::HgpcpModel& trend,
                         std::span<const HospitalInfo> hospitals, const HazardSet& hazards,
                         const EmpiricalCohort& cohort, const CurrentPatients* current = nullptr);

// Aggregated admission forecast for the scenario's scope.
ForecastDistribution scenario_admissions(const ScenarioSpec& spec, const hgpcp::HgpcpModel& trend,
                                         std::span<const HospitalInfo> hospitals);

}  // namespace icu::sim
