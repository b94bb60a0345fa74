#include "icuplan/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "icuplan/errors.hpp"
#include "icuplan/numeric.hpp"
#include "json_eigen.hpp"

namespace icu::sim {

namespace {

bool first_success(const Eigen::MatrixXd& hazards, Eigen::Index row, int from_tau, Rng& rng, int& tau) {
  for (int k = from_tau; k <= hazards.cols(); ++k) {
    if (uniform01(rng) < hazards(row, k - 1)) {
      tau = k;
      return true;
    }
  }
  return false;
}

// Inflow on day `entry`, then outflow and ventilation timed from ICU entry.
void icu_stay(const CohortHazards& h, Eigen::Index row, int entry, int horizon, Rng& rng, int rep, MatrixXi& outflow,
              MatrixXi& ventilation) {
  const Eigen::Index stay = std::max(h.mortality.cols(), h.discharge.cols());
  for (Eigen::Index s = 1; s <= stay; ++s) {
    const bool dies = s <= h.mortality.cols() && uniform01(rng) < h.mortality(row, s - 1);
    const bool leaves = s <= h.discharge.cols() && uniform01(rng) < h.discharge(row, s - 1);
    if (dies || leaves) {
      const auto day = entry + s;
      if (day <= horizon) ++outflow(rep, day - 1);
      break;
    }
  }
  int tau = 0;
  if (first_success(h.ventilation, row, 1, rng, tau) && entry + tau <= horizon) ++ventilation(rep, entry + tau - 1);
}

MatrixXi json_int_matrix(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<int>>>();
  if (rows.empty()) return MatrixXi(0, 0);
  MatrixXi m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw InvalidArgument("ragged counter matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

nlohmann::json int_matrix_json(const MatrixXi& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<int> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    out.push_back(row);
  }
  return out;
}

nlohmann::json summary_json(const DaySummary& s) {
  return {{"mean", s.mean}, {"q05", s.q05}, {"q50", s.q50}, {"q95", s.q95}};
}

Eigen::MatrixXd scenario_mobility(const ScenarioSpec& spec, const hgpcp::HospitalFit& h) {
  if (spec.mobility_mode == MobilityMode::user_series) return spec.mobility_series->topRows(spec.horizon);
  HospitalSeries s;
  s.hospital_id = h.hospital_id;
  s.admissions = h.admissions;
  s.mobility = h.mobility;
  return hgpcp::default_mobility(s, spec.horizon);
}

}  // namespace

std::string_view resolution_name(Resolution r) {
  switch (r) {
    case Resolution::hospital: return "hospital";
    case Resolution::region: return "region";
    case Resolution::national: return "national";
  }
  return "national";
}

Resolution parse_resolution(std::string_view name) {
  if (name == "hospital") return Resolution::hospital;
  if (name == "region") return Resolution::region;
  if (name == "national") return Resolution::national;
  throw InvalidArgument("unknown resolution: " + std::string(name));
}

std::string_view mobility_mode_name(MobilityMode m) {
  return m == MobilityMode::user_series ? "user-series" : "constant-extrapolation";
}

MobilityMode parse_mobility_mode(std::string_view name) {
  if (name == "constant-extrapolation") return MobilityMode::constant_extrapolation;
  if (name == "user-series") return MobilityMode::user_series;
  throw InvalidArgument("unknown mobility mode: " + std::string(name));
}

void ScenarioSpec::validate() const {
  if (horizon < 1) throw InvalidArgument("horizon must be at least one day");
  if (repetitions < 1) throw InvalidArgument("repetitions must be at least 1");
  if (target_id.empty()) throw InvalidArgument("target id must be nonempty");
  if (mobility_mode == MobilityMode::user_series) {
    if (!mobility_series) throw InvalidArgument("user-series mode needs a mobility series");
    if (mobility_series->rows() < horizon) throw InvalidArgument("mobility series is shorter than the horizon");
    if (!mobility_series->allFinite()) throw InvalidArgument("mobility series must be finite");
  }
}

nlohmann::json ScenarioSpec::to_json() const {
  nlohmann::json j{{"resolution", resolution_name(resolution)},
                   {"target_id", target_id},
                   {"horizon", horizon},
                   {"mobility_mode", mobility_mode_name(mobility_mode)},
                   {"repetitions", repetitions},
                   {"seed", seed}};
  if (mobility_series) j["mobility_series"] = detail::rows_json(*mobility_series);
  return j;
}

ScenarioSpec ScenarioSpec::from_json(const nlohmann::json& j) {
  ScenarioSpec s;
  s.resolution = parse_resolution(j.value("resolution", std::string("national")));
  s.target_id = j.value("target_id", std::string(s.resolution == Resolution::national ? "national" : ""));
  s.horizon = j.value("horizon", 30);
  s.mobility_mode = parse_mobility_mode(j.value("mobility_mode", std::string("constant-extrapolation")));
  s.repetitions = j.value("repetitions", 100);
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("mobility_series") && !j.at("mobility_series").is_null())
    s.mobility_series = detail::json_rows(j.at("mobility_series"));
  s.validate();
  return s;
}

std::vector<std::string> scope(std::span<const HospitalInfo> hospitals, Resolution resolution,
                               std::string_view target_id) {
  std::vector<std::string> ids;
  for (const auto& h : hospitals) {
    const bool in = resolution == Resolution::national || (resolution == Resolution::hospital && h.hospital_id == target_id) ||
                    (resolution == Resolution::region && h.region == target_id);
    if (in) ids.push_back(h.hospital_id);
  }
  if (ids.empty())
    throw NotFound("no hospitals for " + std::string(resolution_name(resolution)) + " " + std::string(target_id));
  return ids;
}

std::size_t EmpiricalCohort::draw_index(Rng& rng) const {
  if (rows.empty()) throw InvalidArgument("cannot sample from an empty cohort");
  return std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng);
}

EmpiricalCohort empirical_distribution(const std::vector<PatientRecord>& patients, const FeatureSchema& schema,
                                       std::span<const HospitalInfo> hospitals, Resolution resolution,
                                       std::string_view target_id) {
  const auto ids = scope(hospitals, resolution, target_id);
  EmpiricalCohort c;
  c.schema = schema;
  for (const auto& p : patients) {
    if (std::find(ids.begin(), ids.end(), p.hospital_id) == ids.end()) continue;
    if (p.features.size() != schema.size()) throw InvalidArgument("patient " + p.patient_id + " does not match the schema");
    c.rows.push_back(p.features);
  }
  if (c.rows.empty()) throw InvalidArgument("no patients in " + std::string(target_id));
  return c;
}

void CohortHazards::validate() const {
  for (const Eigen::MatrixXd* m : {&icu, &mortality, &discharge, &ventilation}) {
    if (m->rows() != icu.rows()) throw InvalidArgument("hazard matrices differ in row count");
    if (!m->allFinite() || (m->size() > 0 && (m->minCoeff() < 0.0 || m->maxCoeff() > 1.0)))
      throw InvalidArgument("hazards must lie in [0, 1]");
  }
}

CohortHazards cohort_hazards(const FeatureSchema& schema, const std::vector<std::vector<double>>& rows,
                             const HazardSet& hazards) {
  for (Outcome o : kAllOutcomes)
    if (!hazards.contains(o)) throw InvalidArgument("missing hazard model for " + std::string(outcome_name(o)));
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& r : rows) {
    if (r.size() != schema.size()) throw InvalidArgument("feature row does not match the schema");
    ptrs.push_back(&r);
  }
  const Eigen::MatrixXd x = schema.encode_rows(ptrs);
  CohortHazards h;
  h.icu = hazards.at(Outcome::icu).predict_hazards(x);
  h.mortality = hazards.at(Outcome::mortality).predict_hazards(x);
  h.discharge = hazards.at(Outcome::discharge).predict_hazards(x);
  h.ventilation = hazards.at(Outcome::ventilation).predict_hazards(x);
  return h;
}

DaySummary summarize(const MatrixXi& per_repetition) {
  if (per_repetition.rows() < 1) throw InvalidArgument("at least one repetition is required");
  DaySummary s;
  std::vector<double> col(static_cast<std::size_t>(per_repetition.rows()));
  for (Eigen::Index d = 0; d < per_repetition.cols(); ++d) {
    for (Eigen::Index r = 0; r < per_repetition.rows(); ++r) col[static_cast<std::size_t>(r)] = per_repetition(r, d);
    std::sort(col.begin(), col.end());
    s.mean.push_back(mean_of(col));
    s.q05.push_back(order_statistic(col, 0.05));
    s.q50.push_back(order_statistic(col, 0.50));
    s.q95.push_back(order_statistic(col, 0.95));
  }
  return s;
}

void SimulatedDemand::validate() const {
  const auto reps = icu_inflow.rows();
  for (const MatrixXi* m : {&icu_inflow, &icu_outflow, &ventilation_starts, &net_occupancy, &current_icu_inflow}) {
    if (m->rows() != reps || m->cols() != horizon) throw InvalidArgument("counter matrices do not match the horizon");
    if (m->size() > 0 && m->minCoeff() < 0) throw InvalidArgument("counters must be nonnegative");
  }
  for (Eigen::Index r = 0; r < reps; ++r) {
    long in = 0, out = 0;
    for (int d = 0; d < horizon; ++d) {
      in += icu_inflow(r, d);
      out += icu_outflow(r, d);
      if (out > in) throw InvalidArgument("cumulative outflow exceeds inflow");
      if (net_occupancy(r, d) != in - out) throw InvalidArgument("occupancy is not the running balance");
    }
  }
}

nlohmann::json SimulatedDemand::to_json(bool per_repetition) const {
  nlohmann::json days = nlohmann::json::array();
  for (int d = 1; d <= horizon; ++d) days.push_back(d);
  nlohmann::json j{{"horizon", horizon},
                   {"repetitions", repetitions()},
                   {"days", days},
                   {"summary",
                    {{"icu_inflow", summary_json(inflow_summary)},
                     {"icu_outflow", summary_json(outflow_summary)},
                     {"ventilation_starts", summary_json(ventilation_summary)},
                     {"net_occupancy", summary_json(occupancy_summary)},
                     {"current_icu_inflow", summary_json(summarize(current_icu_inflow))}}}};
  if (per_repetition)
    j["per_repetition"] = {{"icu_inflow", int_matrix_json(icu_inflow)},
                           {"icu_outflow", int_matrix_json(icu_outflow)},
                           {"ventilation_starts", int_matrix_json(ventilation_starts)},
                           {"net_occupancy", int_matrix_json(net_occupancy)},
                           {"current_icu_inflow", int_matrix_json(current_icu_inflow)}};
  return j;
}

SimulatedDemand SimulatedDemand::from_json(const nlohmann::json& j) {
  if (!j.contains("per_repetition")) throw InvalidArgument("per-repetition counters are required");
  SimulatedDemand s;
  s.horizon = j.at("horizon").get<int>();
  const auto& p = j.at("per_repetition");
  s.icu_inflow = json_int_matrix(p.at("icu_inflow"));
  s.icu_outflow = json_int_matrix(p.at("icu_outflow"));
  s.ventilation_starts = json_int_matrix(p.at("ventilation_starts"));
  s.net_occupancy = json_int_matrix(p.at("net_occupancy"));
  s.current_icu_inflow = json_int_matrix(p.at("current_icu_inflow"));
  s.validate();
  s.inflow_summary = summarize(s.icu_inflow);
  s.outflow_summary = summarize(s.icu_outflow);
  s.ventilation_summary = summarize(s.ventilation_starts);
  s.occupancy_summary = summarize(s.net_occupancy);
  return s;
}

SimulatedDemand simulate_arrivals(const Eigen::MatrixXd& arrival_paths, const CohortHazards& cohort, int repetitions,
                                  std::uint64_t seed, const CurrentPatients* current) {
  if (repetitions < 1) throw InvalidArgument("repetitions must be at least 1");
  if (arrival_paths.rows() < 1 || arrival_paths.cols() < 1) throw InvalidArgument("arrival paths are empty");
  if (!arrival_paths.allFinite()) throw InvalidArgument("arrival paths must be finite");
  cohort.validate();
  if (cohort.rows() == 0 && arrival_paths.maxCoeff() >= 0.5) throw InvalidArgument("cannot sample from an empty cohort");
  if (current) {
    current->hazards.validate();
    if (current->days_since_admission.size() != static_cast<std::size_t>(current->hazards.rows()))
      throw InvalidArgument("one admission age per current patient is required");
    for (int k : current->days_since_admission)
      if (k < 0) throw InvalidArgument("days since admission must be nonnegative");
  }

  const int horizon = static_cast<int>(arrival_paths.cols());
  SimulatedDemand out;
  out.horizon = horizon;
  for (MatrixXi* m : {&out.icu_inflow, &out.icu_outflow, &out.ventilation_starts, &out.net_occupancy,
                      &out.current_icu_inflow})
    *m = MatrixXi::Zero(repetitions, horizon);

  auto run = [&](int rep) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(rep));
    const auto path = arrival_paths.row(rep % arrival_paths.rows());
    for (int t = 1; t <= horizon; ++t) {
      const auto arrivals = static_cast<long>(std::max(std::nearbyint(path[t - 1]), 0.0));
      for (long i = 0; i < arrivals; ++i) {
        const auto row = static_cast<Eigen::Index>(
            std::uniform_int_distribution<Eigen::Index>(0, cohort.rows() - 1)(rng));
        int tau = 0;
        if (!first_success(cohort.icu, row, 1, rng, tau)) continue;
        const int entry = t + tau;
        if (entry > horizon) continue;
        ++out.icu_inflow(rep, entry - 1);
        icu_stay(cohort, row, entry, horizon, rng, rep, out.icu_outflow, out.ventilation_starts);
      }
    }
    if (current) {
      for (Eigen::Index row = 0; row < current->hazards.rows(); ++row) {
        const int age = current->days_since_admission[static_cast<std::size_t>(row)];
        int tau = 0;
        if (!first_success(current->hazards.icu, row, age + 1, rng, tau)) continue;
        const int entry = tau - age;
        if (entry > horizon) continue;
        ++out.icu_inflow(rep, entry - 1);
        ++out.current_icu_inflow(rep, entry - 1);
        icu_stay(current->hazards, row, entry, horizon, rng, rep, out.icu_outflow, out.ventilation_starts);
      }
    }
    long balance = 0;
    for (int d = 0; d < horizon; ++d) {
      balance = std::max(balance + out.icu_inflow(rep, d) - out.icu_outflow(rep, d), 0L);
      out.net_occupancy(rep, d) = static_cast<int>(balance);
    }
  };
  // Each repetition owns its row and its substream, so the split across
  // threads does not affect the result.
  const int workers = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, repetitions);
  if (workers == 1) {
    for (int rep = 0; rep < repetitions; ++rep) run(rep);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int rep = w; rep < repetitions; rep += workers) run(rep);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  out.inflow_summary = summarize(out.icu_inflow);
  out.outflow_summary = summarize(out.icu_outflow);
  out.ventilation_summary = summarize(out.ventilation_starts);
  out.occupancy_summary = summarize(out.net_occupancy);
  return out;
}

ForecastDistribution scenario_admissions(const ScenarioSpec& spec, const hgpcp::HgpcpModel& trend,
                                         std::span<const HospitalInfo> hospitals) {
  spec.validate();
  if (spec.mobility_mode == MobilityMode::user_series && spec.mobility_series->cols() != trend.k)
    throw InvalidArgument("mobility series dimension does not match the trend model");
  std::vector<ForecastDistribution> parts;
  for (const auto& id : scope(hospitals, spec.resolution, spec.target_id)) {
    const hgpcp::HospitalFit& h = trend.hospital(id);
    parts.push_back(hgpcp::forecast(trend, id, scenario_mobility(spec, h), spec.repetitions, spec.seed));
  }
  // Hospitals may have different observation lengths; align on the horizon.
  for (auto& p : parts) p.start_day = parts.front().start_day;
  return aggregate(parts);
}

SimulatedDemand simulate(const ScenarioSpec& spec, const hgpcp::HgpcpModel& trend,
                         std::span<const HospitalInfo> hospitals, const HazardSet& hazards,
                         const EmpiricalCohort& cohort, const CurrentPatients* current) {
  spec.validate();
  if (cohort.size() == 0) throw InvalidArgument("empirical cohort is empty");
  const CohortHazards h = cohort_hazards(cohort.schema, cohort.rows, hazards);
  const ForecastDistribution arrivals = scenario_admissions(spec, trend, hospitals);
  return simulate_arrivals(arrivals.samples, h, spec.repetitions, spec.seed, current);
}

}  // namespace icu::sim
