#include "icuplan/service.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "icuplan/errors.hpp"
#include "icuplan/metrics.hpp"
#include "icuplan/risk.hpp"
#include "../json_eigen.hpp"

namespace fs = std::filesystem;

namespace icu::service {
namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw InvalidArgument("config " + std::string(key) + ": '" + std::string(text) + "' is not a number");
  return v;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw NotFound("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, std::string_view bytes) {
  fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
  }
  fs::rename(tmp, file);
}

// Identifiers end up in paths, so keep them to a safe alphabet.
void check_identifier(std::string_view what, std::string_view id) {
  const bool ok = !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
  if (!ok) throw InvalidArgument(std::string(what) + " must be 1-64 characters of [A-Za-z0-9_-]");
}

void check_integrity(const io::TrendTables& trend, const io::PatientTable& patients) {
  std::set<std::string> ids;
  for (const auto& h : trend.hospitals) ids.insert(h.hospital_id);
  for (const auto& p : patients.patients)
    if (!ids.contains(p.hospital_id))
      throw IntegrityError("patient " + p.patient_id + " references unknown hospital " + p.hospital_id);
  if (trend.series.empty()) throw IntegrityError("dataset has no hospitals");
}

sim::Resolution resolve_target(std::span<const HospitalInfo> hospitals, std::string_view target) {
  if (target == "national") return sim::Resolution::national;
  for (const auto& h : hospitals)
    if (h.hospital_id == target) return sim::Resolution::hospital;
  for (const auto& h : hospitals)
    if (h.region == target) return sim::Resolution::region;
  throw NotFound("no hospital or region named " + std::string(target));
}

nlohmann::json feature_histogram(const FeatureSpec& spec, const std::vector<std::vector<double>>& rows, std::size_t col) {
  std::vector<double> values;
  std::size_t missing = 0;
  for (const auto& r : rows) {
    if (is_missing(r[col])) ++missing;
    else values.push_back(r[col]);
  }
  nlohmann::json j{{"name", spec.name}, {"missing", missing}};
  if (spec.kind == FeatureKind::categorical) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(spec.levels), 0);
    for (double v : values) ++counts[static_cast<std::size_t>(v)];
    j["kind"] = "categorical";
    j["counts"] = counts;
    return j;
  }
  constexpr int bins = 10;
  j["kind"] = "numeric";
  if (values.empty()) {
    j["edges"] = nlohmann::json::array();
    j["counts"] = nlohmann::json::array();
    return j;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it, width = hi > lo ? (hi - lo) / bins : 1.0;
  std::vector<double> edges;
  for (int b = 0; b <= bins; ++b) edges.push_back(lo + b * width);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) ++counts[static_cast<std::size_t>(std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1))];
  j["edges"] = edges;
  j["counts"] = counts;
  return j;
}

nlohmann::json with_header(nlohmann::json body) {
  body["schema_version"] = kSchemaVersion;
  return body;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("internal", "SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

void check_schema_version(const nlohmann::json& document) {
  if (!document.is_object()) throw InvalidArgument("request body must be an object");
  if (document.contains("schema_version") && document.at("schema_version") != kSchemaVersion)
    throw InvalidArgument("unsupported schema version " + document.at("schema_version").dump());
}


void ServiceConfig::set(std::string_view key, std::string_view value) {
  if (key == "data_root") data_root = std::string(value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "dt") dt = parse_number<double>(key, value);
  else if (key == "trend_steps") trend_steps = parse_number<int>(key, value);
  else if (key == "mc_samples") mc_samples = parse_number<int>(key, value);
  else if (key == "forecast_samples") forecast_samples = parse_number<int>(key, value);
  else if (key == "repetitions") repetitions = parse_number<int>(key, value);
  else if (key == "search_budget") search_budget = parse_number<int>(key, value);
  else if (key == "hazard_horizon") hazard_horizon = parse_number<int>(key, value);
  else if (key == "held_out_fraction") held_out_fraction = parse_number<double>(key, value);
  else if (key == "port") port = parse_number<int>(key, value);
  else throw InvalidArgument("unknown config key " + std::string(key));
}

ServiceConfig ServiceConfig::from_file(const fs::path& file) {
  std::istringstream in(read_file(file));
  ServiceConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw InvalidArgument(file.string() + ":" + std::to_string(lineno) + ": expected key = value");
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  c.validate();
  return c;
}

void ServiceConfig::apply_environment() {
  if (const char* root = std::getenv(kDataRootVariable); root && *root) data_root = root;
}

void ServiceConfig::validate() const {
  if (data_root.empty()) throw InvalidArgument("data_root must be set");
  if (!(dt > 0 && dt <= 1)) throw InvalidArgument("dt must lie in (0, 1]");
  if (trend_steps < 1 || mc_samples < 1 || forecast_samples < 1 || repetitions < 1)
    throw InvalidArgument("step and sample counts must be positive");
  if (search_budget < 0) throw InvalidArgument("search_budget must be nonnegative");
  if (hazard_horizon < 1) throw InvalidArgument("hazard_horizon must be positive");
  if (!(held_out_fraction > 0 && held_out_fraction < 1)) throw InvalidArgument("held_out_fraction must lie in (0, 1)");
  if (port < 0 || port > 65535) throw InvalidArgument("port out of range");
}

nlohmann::json ServiceConfig::to_json() const {
  return {{"data_root", data_root.string()},     {"seed", seed},
          {"dt", dt},                            {"trend_steps", trend_steps},
          {"mc_samples", mc_samples},            {"forecast_samples", forecast_samples},
          {"repetitions", repetitions},          {"search_budget", search_budget},
          {"hazard_horizon", hazard_horizon},    {"held_out_fraction", held_out_fraction},
          {"port", port}};
}

hgpcp::HgpcpConfig ServiceConfig::trend_config() const {
  hgpcp::HgpcpConfig c;
  c.dt = dt;
  c.steps = trend_steps;
  c.mc_samples = mc_samples;
  c.forecast_samples = forecast_samples;
  c.checkpoint_every = std::min(c.checkpoint_every, trend_steps);
  c.seed = seed;
  return c;
}


std::string_view kind_name(ModelKind kind) { return kind == ModelKind::trend ? "trend" : "hazard"; }

ModelKind parse_kind(std::string_view name) {
  if (name == "trend") return ModelKind::trend;
  if (name == "hazard") return ModelKind::hazard;
  throw InvalidArgument("unknown model kind " + std::string(name));
}

nlohmann::json RegistryEntry::to_json() const {
  return {{"model_id", model_id}, {"kind", kind_name(kind)},   {"version", version},
          {"created_at", created_at}, {"dataset_id", dataset_id}, {"artifact", artifact},
          {"sha256", sha256},     {"held_out_metrics", held_out_metrics}, {"status", active ? "active" : "archived"}};
}

RegistryEntry RegistryEntry::from_json(const nlohmann::json& j) {
  RegistryEntry e;
  e.model_id = j.at("model_id").get<std::string>();
  e.kind = parse_kind(j.at("kind").get<std::string>());
  e.version = j.at("version").get<int>();
  e.created_at = j.at("created_at").get<std::string>();
  e.dataset_id = j.at("dataset_id").get<std::string>();
  e.artifact = j.at("artifact").get<std::string>();
  e.sha256 = j.at("sha256").get<std::string>();
  e.held_out_metrics = j.at("held_out_metrics");
  e.active = j.at("status").get<std::string>() == "active";
  return e;
}

nlohmann::json HistoryRecord::to_json() const {
  nlohmann::json j{{"timestamp", timestamp}, {"model_id", model_id}, {"kind", kind_name(kind)},
                   {"dataset_id", dataset_id}, {"metrics", metrics}, {"status", error.empty() ? "ok" : "failed"}};
  j["version"] = version ? nlohmann::json(*version) : nlohmann::json(nullptr);
  if (!error.empty()) j["error"] = error;
  return j;
}

HistoryRecord HistoryRecord::from_json(const nlohmann::json& j) {
  HistoryRecord r;
  r.timestamp = j.at("timestamp").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.kind = parse_kind(j.at("kind").get<std::string>());
  r.dataset_id = j.at("dataset_id").get<std::string>();
  if (!j.at("version").is_null()) r.version = j.at("version").get<int>();
  r.metrics = j.at("metrics");
  r.error = j.value("error", std::string());
  return r;
}

TrainRequest TrainRequest::from_json(const nlohmann::json& j) {
  check_schema_version(j);
  TrainRequest r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.kind = parse_kind(j.at("kind").get<std::string>());
  r.model_id = j.value("model_id", r.model_id);
  if (j.contains("search_budget") && !j.at("search_budget").is_null()) {
    r.search_budget = j.at("search_budget").get<int>();
    if (*r.search_budget < 0) throw InvalidArgument("search_budget must be nonnegative");
  }
  check_identifier("model_id", r.model_id);
  return r;
}

ForecastRequest ForecastRequest::from_json(const nlohmann::json& j) {
  check_schema_version(j);
  ForecastRequest r;
  r.model_id = j.value("model_id", r.model_id);
  r.target = j.value("hospital_or_region", r.target);
  r.horizon = j.value("horizon", r.horizon);
  r.mobility_mode = sim::parse_mobility_mode(j.value("mobility_mode", std::string("constant-extrapolation")));
  if (j.contains("mobility_series") && !j.at("mobility_series").is_null())
    r.mobility_series = detail::json_rows(j.at("mobility_series"));
  if (j.contains("samples")) r.samples = j.at("samples").get<int>();
  r.seed = j.value("seed", r.seed);
  check_identifier("model_id", r.model_id);
  return r;
}


TrainedArtifact train_trend(const Dataset& data, const TrainRequest&, const ServiceConfig& config) {
  const auto& series = data.trend.series;
  int days = series.front().days();
  for (const auto& s : series) days = std::min(days, s.days());
  const int held = std::max(1, static_cast<int>(std::lround(config.held_out_fraction * days)));
  const int split = days - held;
  if (split < 7) throw InvalidArgument("too few days to hold out " + std::to_string(held));

  const hgpcp::HgpcpConfig cfg = config.trend_config();
  std::vector<HospitalSeries> train;
  for (const auto& s : series) train.push_back(s.truncated(split));
  const auto eval = hgpcp::fit(train, data.trend.hospitals, cfg);

  std::vector<double> truth_total(static_cast<std::size_t>(held), 0.0), pred_total(truth_total);
  double hospital_mae = 0;
  for (const auto& s : series) {
    const auto f = hgpcp::forecast(eval, s.hospital_id, s.mobility.middleRows(split, held), cfg.forecast_samples,
                                   derive_seed(config.seed, "service/held-out"));
    const std::vector<double> truth(s.admissions.begin() + split, s.admissions.begin() + split + held);
    hospital_mae += metrics::mae_forecast(truth, f.mean);
    for (int d = 0; d < held; ++d) {
      truth_total[static_cast<std::size_t>(d)] += truth[static_cast<std::size_t>(d)];
      pred_total[static_cast<std::size_t>(d)] += f.mean[static_cast<std::size_t>(d)];
    }
  }

  const auto full = hgpcp::fit(series, data.trend.hospitals, cfg);
  TrainedArtifact out;
  out.artifact = {{"schema_version", kSchemaVersion}, {"kind", "trend"}, {"dataset_id", data.id}, {"model", full.to_json()}};
  out.metrics = {{"held_out_days", held},
                 {"national_mae", metrics::mae_forecast(truth_total, pred_total)},
                 {"mean_hospital_mae", hospital_mae / static_cast<double>(series.size())},
                 {"final_elbo", full.final_elbo}};
  return out;
}

search::SearchResult search_hazard_pipeline(const io::PatientTable& patients, int budget, std::uint64_t seed) {
  if (budget < 1) throw InvalidArgument("search budget must be positive");
  const risk::Slice slice = risk::derive_slice(patients.patients, Outcome::icu, 7);
  const Eigen::MatrixXd x = risk::design_matrix(patients.schema, patients.patients, slice.rows);
  const auto objective = [&](const pipeline::PipelineConfig& c) {
    return risk::cross_validate(c, x, slice.labels, 3, derive_seed(seed, "service/search-cv")).mean_loss;
  };
  search::SearchOptions opt;
  opt.budget = budget;
  opt.init_count = std::min(opt.init_count, budget);
  opt.seed = seed;
  return search::search(pipeline::reduced_registry(), objective, opt);
}

TrainedArtifact train_hazard(const Dataset& data, const TrainRequest& request, const ServiceConfig& config) {
  const auto& all = data.patients.patients;
  if (all.size() < 10) throw InvalidArgument("too few patients to hold out a test split");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(config.seed, "service/hazard-split");
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.held_out_fraction * static_cast<double>(all.size()))));
  std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(test_idx.begin(), test_idx.end());
  std::vector<bool> is_test(all.size(), false);
  for (auto i : test_idx) is_test[i] = true;
  io::PatientTable train{data.patients.schema, {}};
  std::vector<PatientRecord> test;
  for (std::size_t i = 0; i < all.size(); ++i) (is_test[i] ? test : train.patients).push_back(all[i]);

  pipeline::PipelineConfig chosen = pipeline::default_risk_config();
  nlohmann::json search_info = nullptr;
  const int budget = request.search_budget.value_or(config.search_budget);
  if (budget > 0) {
    const auto result = search_hazard_pipeline(train, budget, config.seed);
    chosen = result.best_config;
    search_info = {{"budget", budget}, {"best_loss", result.best_loss}};
  }

  risk::HazardFitOptions opt;
  opt.horizon = config.hazard_horizon;
  opt.seed = config.seed;
  opt.configs = {chosen};
  const int tau = std::min(7, config.hazard_horizon);
  nlohmann::json models = nlohmann::json::object(), scores = nlohmann::json::object();
  for (Outcome o : kAllOutcomes) {
    const auto model = risk::fit_hazard_model(train.patients, train.schema, o, opt);
    const risk::Slice slice = risk::derive_slice(test, o, tau);
    nlohmann::json s{{"at_risk", slice.rows.size()}, {"auc", nullptr}, {"brier", nullptr}};
    if (!slice.rows.empty()) {
      const Eigen::VectorXd p = model.per_day[static_cast<std::size_t>(tau - 1)].predict(
          risk::design_matrix(train.schema, test, slice.rows));
      const std::vector<double> probs(p.data(), p.data() + p.size());
      s["brier"] = metrics::brier(probs, slice.labels);
      const auto positives = std::count(slice.labels.begin(), slice.labels.end(), 1);
      if (positives > 0 && positives < static_cast<long>(slice.labels.size())) s["auc"] = metrics::auc_roc(probs, slice.labels);
    }
    scores[std::string(outcome_name(o))] = s;
    models[std::string(outcome_name(o))] = model.to_json();
  }

  TrainedArtifact out;
  out.artifact = {{"schema_version", kSchemaVersion},
                  {"kind", "hazard"},
                  {"dataset_id", data.id},
                  {"pipeline", pipeline::to_json(chosen)},
                  {"models", models}};
  out.metrics = {{"day", tau},
                 {"train_patients", train.patients.size()},
                 {"held_out_patients", test.size()},
                 {"pipeline", pipeline::to_json(chosen)},
                 {"search", search_info},
                 {"outcomes", scores}};
  return out;
}

hgpcp::HgpcpModel trend_from_artifact(const nlohmann::json& artifact) {
  check_schema_version(artifact);
  if (artifact.at("kind") != "trend") throw InvalidArgument("artifact is not a trend model");
  return hgpcp::HgpcpModel::from_json(artifact.at("model"));
}

sim::HazardSet hazards_from_artifact(const nlohmann::json& artifact) {
  check_schema_version(artifact);
  if (artifact.at("kind") != "hazard") throw InvalidArgument("artifact is not a hazard model");
  sim::HazardSet set;
  for (Outcome o : kAllOutcomes) {
    const std::string name(outcome_name(o));
    if (!artifact.at("models").contains(name)) throw InvalidArgument("missing hazard model for " + name);
    set.emplace(o, risk::HazardModel::from_json(artifact.at("models").at(name)));
  }
  return set;
}


Service::Service(ServiceConfig config) : config_(std::move(config)) {
  config_.validate();
  trainers_[ModelKind::trend] = train_trend;
  trainers_[ModelKind::hazard] = train_hazard;
  fs::create_directories(config_.data_root / "datasets");
  fs::create_directories(config_.data_root / "models");
  const fs::path file = config_.data_root / "registry.json";
  if (fs::exists(file)) {
    const auto j = nlohmann::json::parse(read_file(file));
    check_schema_version(j);
    for (const auto& e : j.at("entries")) registry_.entries.push_back(RegistryEntry::from_json(e));
    for (const auto& h : j.at("history")) registry_.history.push_back(HistoryRecord::from_json(h));
  }
}

void Service::set_trainer(ModelKind kind, Trainer trainer) {
  std::lock_guard lock(train_mutex_);
  trainers_[kind] = std::move(trainer);
}

std::string Service::ingest(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const char* name : kDatasetFiles) files[name] = read_file(dir / name);
  return ingest(files);
}

std::string Service::ingest(const std::map<std::string, std::string>& files) {
  for (const auto& [name, _] : files)
    if (std::find(kDatasetFiles.begin(), kDatasetFiles.end(), name) == kDatasetFiles.end())
      throw InvalidArgument("unexpected dataset file " + name);
  std::string canonical;
  for (const char* name : kDatasetFiles) {
    const auto it = files.find(name);
    if (it == files.end()) throw InvalidArgument(std::string("dataset is missing ") + name);
    canonical += std::string(name) + '\0' + std::to_string(it->second.size()) + '\0' + it->second;
  }
  const std::string id = sha256_hex(canonical);
  const fs::path target = config_.data_root / "datasets" / id;
  if (fs::exists(target / "manifest.json")) return id;

  const fs::path staging = config_.data_root / "datasets" / (".incoming-" + id);
  fs::remove_all(staging);
  for (const auto& [name, bytes] : files) write_file(staging / name, bytes);
  try {
    auto data = std::make_shared<Dataset>();
    data->id = id;
    data->trend = io::read_trend(staging);
    data->patients = io::read_patients(staging / "patients.csv");
    check_integrity(data->trend, data->patients);
    write_file(staging / "manifest.json",
               with_header({{"dataset_id", id},
                            {"hospitals", data->trend.hospitals.size()},
                            {"patients", data->patients.patients.size()},
                            {"ingested_at", utc_timestamp()}})
                   .dump(2));
    fs::remove_all(target);
    fs::rename(staging, target);
    std::lock_guard lock(cache_mutex_);
    datasets_[id] = std::move(data);
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  return id;
}

std::shared_ptr<const Dataset> Service::dataset(std::string_view id) const {
  check_identifier("dataset_id", id);
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = datasets_.find(std::string(id)); it != datasets_.end()) return it->second;
  }
  const fs::path dir = config_.data_root / "datasets" / std::string(id);
  if (!fs::exists(dir / "manifest.json")) throw NotFound("unknown dataset " + std::string(id));
  auto data = std::make_shared<Dataset>();
  data->id = std::string(id);
  data->trend = io::read_trend(dir);
  data->patients = io::read_patients(dir / "patients.csv");
  std::lock_guard lock(cache_mutex_);
  return datasets_.emplace(std::string(id), std::move(data)).first->second;
}

void Service::save_registry() const {
  nlohmann::json entries = nlohmann::json::array(), history = nlohmann::json::array();
  for (const auto& e : registry_.entries) entries.push_back(e.to_json());
  for (const auto& h : registry_.history) history.push_back(h.to_json());
  write_file(config_.data_root / "registry.json",
             with_header({{"entries", entries}, {"history", history}}).dump(2));
}

void Service::append_history(HistoryRecord record) {
  std::unique_lock lock(registry_mutex_);
  registry_.history.push_back(std::move(record));
  save_registry();
}

RegistryEntry Service::retrain(const TrainRequest& request) {
  check_identifier("model_id", request.model_id);
  std::lock_guard job(train_mutex_);
  const auto data = dataset(request.dataset_id);

  HistoryRecord record;
  record.timestamp = utc_timestamp();
  record.model_id = request.model_id;
  record.kind = request.kind;
  record.dataset_id = request.dataset_id;
  TrainedArtifact trained;
  try {
    trained = trainers_.at(request.kind)(*data, request, config_);
  } catch (const std::exception& e) {
    record.error = e.what();
    append_history(std::move(record));
    throw;
  }

  std::unique_lock lock(registry_mutex_);
  int version = 0;
  RegistryEntry* previous = nullptr;
  for (auto& e : registry_.entries) {
    if (e.model_id != request.model_id || e.kind != request.kind) continue;
    version = std::max(version, e.version);
    if (e.active) previous = &e;
  }
  RegistryEntry entry;
  entry.model_id = request.model_id;
  entry.kind = request.kind;
  entry.version = version + 1;
  entry.created_at = utc_timestamp();
  entry.dataset_id = request.dataset_id;
  entry.held_out_metrics = trained.metrics;
  entry.active = true;
  trained.artifact["model_id"] = entry.model_id;
  trained.artifact["version"] = entry.version;
  const std::string bytes = trained.artifact.dump();
  entry.sha256 = sha256_hex(bytes);
  const fs::path rel = fs::path("models") / entry.model_id / std::string(kind_name(entry.kind));
  entry.artifact = (rel / ("v" + std::to_string(entry.version) + ".json")).string();
  write_file(config_.data_root / entry.artifact, bytes);

  if (previous) {
    const fs::path archived = rel / "archive" / ("v" + std::to_string(previous->version) + ".json");
    fs::create_directories(config_.data_root / archived.parent_path());
    fs::rename(config_.data_root / previous->artifact, config_.data_root / archived);
    previous->artifact = archived.string();
    previous->active = false;
  }
  registry_.entries.push_back(entry);
  record.version = entry.version;
  record.metrics = trained.metrics;
  registry_.history.push_back(std::move(record));
  save_registry();
  return entry;
}

std::vector<RegistryEntry> Service::models() const {
  std::shared_lock lock(registry_mutex_);
  return registry_.entries;
}

std::vector<HistoryRecord> Service::history(std::string_view model_id) const {
  std::shared_lock lock(registry_mutex_);
  std::vector<HistoryRecord> out;
  for (const auto& h : registry_.history)
    if (h.model_id == model_id) out.push_back(h);
  if (out.empty()) throw NotFound("unknown model " + std::string(model_id));
  return out;
}

RegistryEntry Service::active(std::string_view model_id, ModelKind kind) const {
  std::shared_lock lock(registry_mutex_);
  for (const auto& e : registry_.entries)
    if (e.model_id == model_id && e.kind == kind && e.active) return e;
  throw NotFound("no active " + std::string(kind_name(kind)) + " model " + std::string(model_id));
}

RegistryEntry Service::entry(std::string_view model_id, ModelKind kind, int version) const {
  std::shared_lock lock(registry_mutex_);
  for (const auto& e : registry_.entries)
    if (e.model_id == model_id && e.kind == kind && e.version == version) return e;
  throw NotFound(std::string(kind_name(kind)) + " model " + std::string(model_id) + " has no version " +
                 std::to_string(version));
}

std::string Service::artifact_bytes(const RegistryEntry& entry) const {
  std::string bytes = read_file(config_.data_root / entry.artifact);
  if (sha256_hex(bytes) != entry.sha256) throw IntegrityError("artifact " + entry.artifact + " does not match its hash");
  return bytes;
}

std::shared_ptr<const hgpcp::HgpcpModel> Service::trend_model(const RegistryEntry& entry) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = trends_.find(entry.sha256); it != trends_.end()) return it->second;
  }
  auto model = std::make_shared<const hgpcp::HgpcpModel>(trend_from_artifact(nlohmann::json::parse(artifact_bytes(entry))));
  std::lock_guard lock(cache_mutex_);
  return trends_.emplace(entry.sha256, std::move(model)).first->second;
}

std::shared_ptr<const sim::HazardSet> Service::hazard_models(const RegistryEntry& entry) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = hazards_.find(entry.sha256); it != hazards_.end()) return it->second;
  }
  auto set = std::make_shared<const sim::HazardSet>(hazards_from_artifact(nlohmann::json::parse(artifact_bytes(entry))));
  std::lock_guard lock(cache_mutex_);
  return hazards_.emplace(entry.sha256, std::move(set)).first->second;
}

std::vector<HospitalInfo> Service::hospitals_for(const RegistryEntry& trend) const {
  return dataset(trend.dataset_id)->trend.hospitals;
}

ForecastDistribution Service::forecast(const ForecastRequest& request) const {
  const auto entry = active(request.model_id, ModelKind::trend);
  const auto model = trend_model(entry);
  const auto hospitals = hospitals_for(entry);
  sim::ScenarioSpec spec;
  spec.resolution = resolve_target(hospitals, request.target);
  spec.target_id = request.target;
  spec.horizon = request.horizon;
  spec.mobility_mode = request.mobility_mode;
  spec.mobility_series = request.mobility_series;
  spec.repetitions = request.samples.value_or(config_.forecast_samples);
  spec.seed = request.seed;
  return sim::scenario_admissions(spec, *model, hospitals);
}

sim::EmpiricalCohort Service::cohort(const sim::ScenarioSpec& spec, std::string_view model_id) const {
  const auto trend = active(model_id, ModelKind::trend);
  const auto hazard = active(model_id, ModelKind::hazard);
  const auto& patients = dataset(hazard.dataset_id)->patients;
  return sim::empirical_distribution(patients.patients, patients.schema, hospitals_for(trend), spec.resolution,
                                     spec.target_id);
}

sim::SimulatedDemand Service::simulate(const sim::ScenarioSpec& spec, std::string_view model_id) const {
  spec.validate();
  const auto trend = active(model_id, ModelKind::trend);
  const auto hazard = active(model_id, ModelKind::hazard);
  return sim::simulate(spec, *trend_model(trend), hospitals_for(trend), *hazard_models(hazard), cohort(spec, model_id));
}

nlohmann::json Service::handle_ingest(const nlohmann::json& request) {
  check_schema_version(request);
  const auto files = request.at("files").get<std::map<std::string, std::string>>();
  const std::string id = ingest(files);
  const auto data = dataset(id);
  return with_header({{"dataset_id", id},
                      {"hospitals", data->trend.hospitals.size()},
                      {"patients", data->patients.patients.size()}});
}

nlohmann::json Service::handle_train(const nlohmann::json& request) {
  return with_header({{"model", retrain(TrainRequest::from_json(request)).to_json()}});
}

nlohmann::json Service::handle_models() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : models()) list.push_back(e.to_json());
  return with_header({{"models", list}});
}

nlohmann::json Service::handle_metrics(std::string_view model_id) const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& h : history(model_id)) list.push_back(h.to_json());
  return with_header({{"model_id", model_id}, {"history", list}});
}

nlohmann::json Service::handle_forecast(const nlohmann::json& request) const {
  const auto r = ForecastRequest::from_json(request);
  const auto f = forecast(r);
  nlohmann::json doc = f.to_json(request.value("include_samples", false));
  doc["model_id"] = r.model_id;
  doc["model_version"] = active(r.model_id, ModelKind::trend).version;
  doc["hospital_or_region"] = r.target;
  doc["seed"] = r.seed;
  return with_header(std::move(doc));
}

namespace {

sim::ScenarioSpec scenario_from_request(const nlohmann::json& request, const ServiceConfig& config) {
  check_schema_version(request);
  nlohmann::json j = request;
  if (!j.contains("repetitions")) j["repetitions"] = config.repetitions;
  return sim::ScenarioSpec::from_json(j);
}

}  // namespace

nlohmann::json Service::handle_simulate(const nlohmann::json& request) const {
  const auto spec = scenario_from_request(request, config_);
  const std::string model_id = request.value("model_id", std::string("default"));
  check_identifier("model_id", model_id);
  const auto demand = simulate(spec, model_id);
  nlohmann::json doc = demand.to_json(request.value("per_repetition", true));
  doc["scenario"] = spec.to_json();
  doc["model_id"] = model_id;
  doc["trend_version"] = active(model_id, ModelKind::trend).version;
  doc["hazard_version"] = active(model_id, ModelKind::hazard).version;
  return with_header(std::move(doc));
}

nlohmann::json Service::handle_cohort(const nlohmann::json& request) const {
  const auto spec = scenario_from_request(request, config_);
  const std::string model_id = request.value("model_id", std::string("default"));
  check_identifier("model_id", model_id);
  const auto c = cohort(spec, model_id);
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t f = 0; f < c.schema.size(); ++f) features.push_back(feature_histogram(c.schema.features[f], c.rows, f));
  return with_header({{"size", c.size()}, {"features", features}});
}

}  // namespace icu::service
