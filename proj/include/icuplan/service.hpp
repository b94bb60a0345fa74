#pragma once

// Dataset store, model registry and request handlers shared by the HTTP
// server and the command line tool. Everything lives under one data root:
//
//   datasets/<sha256>/                          the four ingested tables
//   models/<model_id>/<kind>/v<N>.json          active artifact
//   models/<model_id>/<kind>/archive/v<N>.json  archived artifacts
//   registry.json                               entries and retrain history

#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "icuplan/forecast.hpp"
#include "icuplan/hgpcp.hpp"
#include "icuplan/io.hpp"
#include "icuplan/search.hpp"
#include "icuplan/simulator.hpp"

namespace icu::service {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kDataRootVariable = "ICUPLAN_DATA_ROOT";

struct ServiceConfig {
  std::filesystem::path data_root = "icuplan-data";
  std::uint64_t seed = 0;
  double dt = 0.25;
  int trend_steps = 2000;
  int mc_samples = 8;          // Monte Carlo draws per ELBO step
  int forecast_samples = 200;  // sample paths per forecast
  int repetitions = 100;       // default simulation repetitions
  int search_budget = 0;       // pipeline search evaluations per hazard retrain; 0 keeps the default pipeline
  int hazard_horizon = 30;
  double held_out_fraction = 0.2;
  int port = 8080;

  // Keys are the field names above.
  void set(std::string_view key, std::string_view value);
  // `key = value` per line; blank lines and lines starting with '#' are skipped.
  static ServiceConfig from_file(const std::filesystem::path& file);
  void apply_environment();
  void validate() const;
  nlohmann::json to_json() const;
  hgpcp::HgpcpConfig trend_config() const;
};

enum class ModelKind { trend, hazard };
std::string_view kind_name(ModelKind kind);
ModelKind parse_kind(std::string_view name);

struct RegistryEntry {
  std::string model_id;
  ModelKind kind = ModelKind::trend;
  int version = 0;
  std::string created_at;
  std::string dataset_id;
  std::string artifact;  // path relative to the data root
  std::string sha256;    // of the artifact bytes
  nlohmann::json held_out_metrics = nlohmann::json::object();
  bool active = false;

  nlohmann::json to_json() const;
  static RegistryEntry from_json(const nlohmann::json& j);
};

// One line per retrain attempt, failed ones included.
struct HistoryRecord {
  std::string timestamp;
  std::string model_id;
  ModelKind kind = ModelKind::trend;
  std::string dataset_id;
  std::optional<int> version;  // empty when training failed
  nlohmann::json metrics = nlohmann::json::object();
  std::string error;

  nlohmann::json to_json() const;
  static HistoryRecord from_json(const nlohmann::json& j);
};

struct Dataset {
  std::string id;
  io::TrendTables trend;
  io::PatientTable patients;
};

inline constexpr std::array<const char*, 4> kDatasetFiles{"hospitals.csv", "mobility.csv", "admissions.csv",
                                                          "patients.csv"};

struct TrainRequest {
  std::string dataset_id;
  ModelKind kind = ModelKind::trend;
  std::string model_id = "default";
  std::optional<int> search_budget;

  static TrainRequest from_json(const nlohmann::json& j);
};

struct TrainedArtifact {
  nlohmann::json artifact;
  nlohmann::json metrics;
};

using Trainer = std::function<TrainedArtifact(const Dataset&, const TrainRequest&, const ServiceConfig&)>;

// Fits on the first (1 - held_out_fraction) of the days, scores the rest,
// then refits on the full series for deployment.
TrainedArtifact train_trend(const Dataset& data, const TrainRequest& request, const ServiceConfig& config);
// Fits on a seeded patient split and scores day-7 AUC and Brier per outcome
// on the held-out part.
TrainedArtifact train_hazard(const Dataset& data, const TrainRequest& request, const ServiceConfig& config);

// Bayesian optimization over the reduced registry, scored by 3-fold Brier on
// the day-7 ICU slice.
search::SearchResult search_hazard_pipeline(const io::PatientTable& patients, int budget, std::uint64_t seed);

hgpcp::HgpcpModel trend_from_artifact(const nlohmann::json& artifact);
sim::HazardSet hazards_from_artifact(const nlohmann::json& artifact);

struct ForecastRequest {
  std::string model_id = "default";
  std::string target = "national";  // hospital id, region name or "national"
  int horizon = 30;
  sim::MobilityMode mobility_mode = sim::MobilityMode::constant_extrapolation;
  std::optional<Eigen::MatrixXd> mobility_series;
  std::optional<int> samples;
  std::uint64_t seed = 0;

  static ForecastRequest from_json(const nlohmann::json& j);
};

std::string sha256_hex(std::string_view bytes);
// Rejects documents that declare a schema version other than ours.
void check_schema_version(const nlohmann::json& document);

class Service {
 public:
  explicit Service(ServiceConfig config);

  const ServiceConfig& config() const noexcept { return config_; }
  void set_trainer(ModelKind kind, Trainer trainer);

  // Validates the bundle and stores it under its content hash. Ingesting the
  // same bytes twice returns the same id.
  std::string ingest(const std::filesystem::path& dir);
  std::string ingest(const std::map<std::string, std::string>& files);
  std::shared_ptr<const Dataset> dataset(std::string_view id) const;

  // Trains, records the attempt and, on success, activates a new version and
  // archives the previous one. On failure the active version is untouched
  // and the error is rethrown.
  RegistryEntry retrain(const TrainRequest& request);

  std::vector<RegistryEntry> models() const;
  std::vector<HistoryRecord> history(std::string_view model_id) const;
  RegistryEntry active(std::string_view model_id, ModelKind kind) const;
  RegistryEntry entry(std::string_view model_id, ModelKind kind, int version) const;
  // Reads the artifact and checks its hash against the registry.
  std::string artifact_bytes(const RegistryEntry& entry) const;

  std::shared_ptr<const hgpcp::HgpcpModel> trend_model(const RegistryEntry& entry) const;
  std::shared_ptr<const sim::HazardSet> hazard_models(const RegistryEntry& entry) const;

  ForecastDistribution forecast(const ForecastRequest& request) const;
  sim::SimulatedDemand simulate(const sim::ScenarioSpec& spec, std::string_view model_id) const;
  sim::EmpiricalCohort cohort(const sim::ScenarioSpec& spec, std::string_view model_id) const;

  // JSON in, JSON document out; shared by the endpoints and the CLI.
  nlohmann::json handle_ingest(const nlohmann::json& request);
  nlohmann::json handle_train(const nlohmann::json& request);
  nlohmann::json handle_models() const;
  nlohmann::json handle_metrics(std::string_view model_id) const;
  nlohmann::json handle_forecast(const nlohmann::json& request) const;
  nlohmann::json handle_simulate(const nlohmann::json& request) const;
  // Per-feature histograms of the cohort a scenario would sample from.
  nlohmann::json handle_cohort(const nlohmann::json& request) const;

 private:
  struct Registry {
    std::vector<RegistryEntry> entries;
    std::vector<HistoryRecord> history;
  };

  void save_registry() const;
  void append_history(HistoryRecord record);
  std::vector<HospitalInfo> hospitals_for(const RegistryEntry& trend) const;

  ServiceConfig config_;
  std::map<ModelKind, Trainer> trainers_;
  Registry registry_;
  mutable std::shared_mutex registry_mutex_;
  std::mutex train_mutex_;  // one training job at a time
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  mutable std::map<std::string, std::shared_ptr<const hgpcp::HgpcpModel>> trends_;
  mutable std::map<std::string, std::shared_ptr<const sim::HazardSet>> hazards_;
};

}  // namespace icu::service
