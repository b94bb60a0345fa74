#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include "icuplan/errors.hpp"
#include "icuplan/io.hpp"
#include "icuplan/server.hpp"
#include "icuplan/synth.hpp"

using namespace icu;
using namespace icu::service;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("icuplan_service_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small world written once per process.
const fs::path& bundle() {
  static const fs::path dir = [] {
    synth::WorldConfig c;
    c.n_hospitals = 3;
    c.n_regions = 2;
    c.n_patients = 400;
    c.days = 40;
    const auto trend = synth::generate_trend_world(c);
    const auto patients = synth::generate_patient_world(c, trend.hospitals);
    const auto d = fresh_dir("bundle");
    io::write_world(d, trend, patients);
    return d;
  }();
  return dir;
}

ServiceConfig quick_config(const std::string& name) {
  ServiceConfig c;
  c.data_root = fresh_dir(name);
  c.trend_steps = 30;
  c.forecast_samples = 20;
  c.repetitions = 10;
  c.hazard_horizon = 10;
  return c;
}

std::map<std::string, std::string> bundle_files() {
  std::map<std::string, std::string> files;
  for (const char* name : kDatasetFiles) {
    std::ifstream in(bundle() / name);
    files[name] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

TrainedArtifact stub_artifact(const Dataset& d, const TrainRequest&, const ServiceConfig&) {
  return {{{"schema_version", kSchemaVersion}, {"kind", "stub"}, {"dataset_id", d.id}}, {{"score", 1.0}}};
}

}  // namespace

TEST_CASE("ingest is content addressed") {
  Service a(quick_config("ingest_a"));
  Service b(quick_config("ingest_b"));
  const auto id = a.ingest(bundle());
  CHECK(id.size() == 64);
  CHECK(a.ingest(bundle()) == id);
  CHECK(b.ingest(bundle_files()) == id);
  CHECK(a.dataset(id)->trend.hospitals.size() == 3);
  CHECK_THROWS_AS(a.dataset("0000"), NotFound);
  CHECK_THROWS_AS(a.dataset("../etc"), InvalidArgument);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("ingest rejects a negative admission count with its row") {
  Service s(quick_config("negative"));
  auto files = bundle_files();
  auto& adm = files["admissions.csv"];
  const auto first = adm.find('\n') + 1;
  const auto end = adm.find('\n', first);
  const std::string line = adm.substr(first, end - first);
  adm.replace(first, end - first, line.substr(0, line.rfind(',') + 1) + "-3");
  try {
    s.ingest(files);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 3);
  }
  CHECK(fs::is_empty(s.config().data_root / "datasets"));
}

TEST_CASE("ingest rejects patients of unknown hospitals, naming the id") {
  Service s(quick_config("integrity"));
  auto files = bundle_files();
  auto& p = files["patients.csv"];
  const auto first = p.find('\n') + 1;
  const auto comma = p.find(',', first);
  const auto next = p.find(',', comma + 1);
  p.replace(comma + 1, next - comma - 1, "H99");
  try {
    s.ingest(files);
    FAIL("expected an integrity error");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("H99") != std::string::npos);
  }
  files = bundle_files();
  files.erase("patients.csv");
  CHECK_THROWS_AS(s.ingest(files), InvalidArgument);
}

TEST_CASE("retrains version, archive and reload bit-exactly") {
  Service s(quick_config("retrain"));
  const auto id = s.ingest(bundle());
  const auto v1 = s.retrain({id, ModelKind::trend, "default", std::nullopt});
  const auto v2 = s.retrain({id, ModelKind::trend, "default", std::nullopt});
  CHECK(v1.version == 1);
  CHECK(v2.version == 2);
  CHECK(s.active("default", ModelKind::trend).version == 2);

  const auto archived = s.entry("default", ModelKind::trend, 1);
  CHECK_FALSE(archived.active);
  CHECK(archived.artifact.find("archive") != std::string::npos);
  const auto bytes = s.artifact_bytes(archived);
  const auto doc = nlohmann::json::parse(bytes);
  const auto model = trend_from_artifact(doc);
  CHECK(model.to_json().dump() == doc.at("model").dump());
  CHECK(v1.held_out_metrics.at("held_out_days") == 8);

  int active = 0;
  for (const auto& e : s.models()) active += e.active && e.kind == ModelKind::trend;
  CHECK(active == 1);

  // The registry survives a restart.
  Service again(s.config());
  CHECK(again.active("default", ModelKind::trend).sha256 == v2.sha256);
  CHECK(again.history("default").size() == 2);
}

TEST_CASE("failed training keeps the active version and is recorded") {
  Service s(quick_config("failure"));
  const auto id = s.ingest(bundle());
  s.set_trainer(ModelKind::trend, stub_artifact);
  s.retrain({id, ModelKind::trend, "m", std::nullopt});
  s.set_trainer(ModelKind::trend, [](const Dataset&, const TrainRequest&, const ServiceConfig&) -> TrainedArtifact {
    throw NumericalError("diverged", 12);
  });
  CHECK_THROWS_AS(s.retrain({id, ModelKind::trend, "m", std::nullopt}), NumericalError);
  CHECK(s.active("m", ModelKind::trend).version == 1);
  s.set_trainer(ModelKind::trend, stub_artifact);
  CHECK(s.retrain({id, ModelKind::trend, "m", std::nullopt}).version == 2);

  const auto h = s.history("m");
  REQUIRE(h.size() == 3);
  CHECK(h[0].version == 1);
  CHECK_FALSE(h[1].version);
  CHECK(h[1].error.find("diverged") != std::string::npos);
  CHECK(h[2].version == 2);
  CHECK(h[0].timestamp <= h[2].timestamp);
  CHECK_THROWS_AS(s.history("nobody"), NotFound);
  CHECK_THROWS_AS(s.retrain({"feed", ModelKind::trend, "m", std::nullopt}), NotFound);
  CHECK(s.history("m").size() == 3);
}

TEST_CASE("hazard retrain scores a held-out split") {
  Service s(quick_config("hazard"));
  const auto id = s.ingest(bundle());
  const auto e = s.retrain({id, ModelKind::hazard, "default", 4});
  const auto& m = e.held_out_metrics;
  CHECK(m.at("held_out_patients") == 80);
  CHECK(m.at("train_patients") == 320);
  CHECK(m.at("search").at("budget") == 4);
  for (const char* o : {"icu", "mortality", "discharge", "ventilation"}) CHECK(m.at("outcomes").contains(o));
  const auto set = s.hazard_models(e);
  CHECK(set->size() == 4);
  CHECK(set->at(Outcome::icu).horizon == 10);
}

TEST_CASE("config files, environment and validation") {
  const auto dir = fresh_dir("config");
  {
    std::ofstream f(dir / "icuplan.conf");
    f << "# defaults\n\ndata_root = " << (dir / "root").string() << "\nseed=7\n dt = 0.5\nsearch_budget = 12\n";
  }
  auto c = ServiceConfig::from_file(dir / "icuplan.conf");
  CHECK(c.seed == 7);
  CHECK(c.dt == 0.5);
  CHECK(c.search_budget == 12);
  CHECK(c.trend_config().dt == 0.5);
  setenv(kDataRootVariable, "/tmp/elsewhere", 1);
  c.apply_environment();
  unsetenv(kDataRootVariable);
  CHECK(c.data_root == "/tmp/elsewhere");
  CHECK_THROWS_AS(c.set("colour", "red"), InvalidArgument);
  CHECK_THROWS_AS(c.set("seed", "x"), InvalidArgument);
  c.dt = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("mobility uploads parse, reject bad files and round-trip") {
  Eigen::MatrixXd m(30, 6);
  for (Eigen::Index r = 0; r < 30; ++r)
    for (Eigen::Index c = 0; c < 6; ++c) m(r, c) = std::sin(0.3 * r + c) * 0.9;
  const std::string text = io::format_mobility_series(m);
  const auto back = io::parse_mobility_series(text);
  CHECK(back == m);

  const std::string five = "retail_recreation,grocery_pharmacy,parks,transit,workplaces\n0,0,0,0,0\n";
  CHECK_THROWS_AS(io::parse_mobility_series(five), SchemaError);
  std::string bad = text;
  const auto line3 = bad.find('\n', bad.find('\n') + 1) + 1;
  const auto cell = bad.find(',', line3) + 1;
  bad.replace(cell, bad.find(',', cell) - cell, "1.5");
  try {
    io::parse_mobility_series(bad);
    FAIL("expected a range error");
  } catch (const SchemaError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 2);
  }
}

TEST_CASE("HTTP contract") {
  Service s(quick_config("http"));
  const auto id = s.ingest(bundle());
  s.retrain({id, ModelKind::trend, "default", std::nullopt});
  s.retrain({id, ModelKind::hazard, "default", std::nullopt});

  httplib::Server server;
  install_routes(server, s);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(nlohmann::json::parse(health->body).at("status") == "ok");

  auto missing = client.Post("/forecast", R"({"model_id":"nope","horizon":7})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  const auto envelope = nlohmann::json::parse(missing->body);
  CHECK(envelope.at("code") == "not_found");
  CHECK(envelope.contains("message"));
  CHECK(envelope.contains("details"));

  auto garbled = client.Post("/simulate", "{not json", "application/json");
  REQUIRE(garbled);
  CHECK(garbled->status == 400);
  auto version = client.Post("/simulate", R"({"schema_version":2})", "application/json");
  REQUIRE(version);
  CHECK(version->status == 400);

  auto forecast = client.Post("/forecast", R"({"hospital_or_region":"national","horizon":7,"seed":3})", "application/json");
  REQUIRE(forecast);
  CHECK(forecast->status == 200);
  const auto f = ForecastDistribution::from_json(nlohmann::json::parse(forecast->body));
  CHECK(f.horizon == 7);

  const std::string scenario = R"({"schema_version":1,"resolution":"national","target_id":"national","horizon":10,
                                   "mobility_mode":"constant-extrapolation","repetitions":8,"seed":21})";
  auto first = client.Post("/simulate", scenario, "application/json");
  auto second = client.Post("/simulate", scenario, "application/json");
  REQUIRE(first);
  REQUIRE(second);
  CHECK(first->status == 200);
  const auto a = nlohmann::json::parse(first->body), b = nlohmann::json::parse(second->body);
  CHECK(a.at("summary").dump() == b.at("summary").dump());
  CHECK(sim::SimulatedDemand::from_json(a).horizon == 10);

  auto cohort = client.Post("/simulate/cohort", scenario, "application/json");
  REQUIRE(cohort);
  CHECK(nlohmann::json::parse(cohort->body).at("size") == 400);

  auto models = client.Get("/models");
  REQUIRE(models);
  CHECK(nlohmann::json::parse(models->body).at("models").size() == 2);
  auto metrics = client.Get("/models/default/metrics");
  REQUIRE(metrics);
  CHECK(nlohmann::json::parse(metrics->body).at("history").size() == 2);

  auto upload = client.Post("/mobility/parse", "retail_recreation\n0.1\n", "text/csv");
  REQUIRE(upload);
  CHECK(upload->status == 422);
  CHECK(nlohmann::json::parse(upload->body).at("details").at("column") == 0);

  server.stop();
  t.join();
}
