#include <algorithm>

#include "icuplan/errors.hpp"
#include "icuplan/risk.hpp"
#include "icuplan/rng.hpp"

namespace icu::risk {

HazardModel fit_hazard_model(const std::vector<PatientRecord>& patients, const FeatureSchema& schema, Outcome outcome,
                             const HazardFitOptions& options) {
  if (options.horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (options.configs.size() != 1 && static_cast<int>(options.configs.size()) != options.horizon)
    throw InvalidArgument("give one pipeline config, or one per day");
  for (const auto& p : patients) p.validate(schema);
  HazardModel m;
  m.outcome = outcome;
  m.horizon = options.horizon;
  m.schema = schema;
  const Eigen::MatrixXd x = design_matrix(schema, patients);
  for (int tau = 1; tau <= options.horizon; ++tau) {
    const Slice s = derive_slice(patients, outcome, tau);
    const auto& config = options.configs.size() == 1 ? options.configs[0] : options.configs[static_cast<std::size_t>(tau - 1)];
    try {
      m.per_day.push_back(fit_pipeline(config, select_rows(x, s.rows), s.labels,
                                       derive_seed(options.seed, static_cast<std::uint64_t>(tau))));
      m.degenerate.push_back(false);
    } catch (const DegenerateSlice&) {
      const double events = static_cast<double>(std::count(s.labels.begin(), s.labels.end(), 1));
      m.per_day.push_back(FittedPipeline::constant(s.labels.empty() ? 0.0 : events / static_cast<double>(s.labels.size())));
      m.degenerate.push_back(true);
    }
  }
  return m;
}

Eigen::MatrixXd HazardModel::predict_hazards(const Eigen::MatrixXd& encoded) const {
  if (static_cast<std::size_t>(encoded.cols()) != schema.encoded_size())
    throw InvalidArgument("design matrix does not match the model schema");
  Eigen::MatrixXd h(encoded.rows(), horizon);
  for (int tau = 0; tau < horizon; ++tau) h.col(tau) = per_day[static_cast<std::size_t>(tau)].predict(encoded);
  return h;
}

std::vector<double> HazardModel::predict_hazard(const std::vector<double>& features) const {
  if (features.size() != schema.size()) throw InvalidArgument("feature vector does not match the model schema");
  Eigen::Matrix<double, 1, Eigen::Dynamic> row(static_cast<Eigen::Index>(schema.encoded_size()));
  schema.encode(features, row.data());
  const Eigen::MatrixXd h = predict_hazards(row);
  return {h.data(), h.data() + h.size()};
}

nlohmann::json HazardModel::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : schema.features)
    features.push_back({{"name", f.name}, {"kind", f.kind == FeatureKind::numeric ? "numeric" : "categorical"}, {"levels", f.levels}});
  nlohmann::json days = nlohmann::json::array();
  for (std::size_t t = 0; t < per_day.size(); ++t) {
    auto j = per_day[t].to_json();
    j["degenerate"] = static_cast<bool>(degenerate[t]);
    days.push_back(std::move(j));
  }
  return {{"outcome", outcome_name(outcome)}, {"horizon", horizon}, {"schema", features}, {"per_day", days}};
}

HazardModel HazardModel::from_json(const nlohmann::json& j) {
  HazardModel m;
  try {
    m.outcome = parse_outcome(j.at("outcome").get<std::string>());
    m.horizon = j.at("horizon").get<int>();
    for (const auto& f : j.at("schema"))
      m.schema.features.push_back({f.at("name").get<std::string>(),
                                   f.at("kind").get<std::string>() == "numeric" ? FeatureKind::numeric : FeatureKind::categorical,
                                   f.at("levels").get<int>()});
    for (const auto& d : j.at("per_day")) {
      m.per_day.push_back(FittedPipeline::from_json(d));
      m.degenerate.push_back(d.value("degenerate", false));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed hazard model: ") + e.what());
  }
  if (static_cast<int>(m.per_day.size()) != m.horizon) throw InvalidArgument("hazard model needs one pipeline per day");
  return m;
}

std::vector<double> event_curve(const std::vector<double>& hazards) {
  std::vector<double> f;
  double survive = 1;
  for (double h : hazards) {
    if (!(h >= 0 && h <= 1)) throw InvalidArgument("hazards must lie in [0, 1]");
    survive *= 1 - h;
    f.push_back(1 - survive);
  }
  return f;
}

}  // namespace icu::risk
