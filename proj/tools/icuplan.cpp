// Command line front end; every subcommand prints a JSON document.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "icuplan/evaluation.hpp"
#include "icuplan/server.hpp"
#include "json_eigen.hpp"

using namespace icu;
using namespace icu::service;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw NotFound("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json mobility_rows(const fs::path& file) { return detail::rows_json(io::parse_mobility_series(slurp(file))); }

void print(const nlohmann::json& doc) { std::cout << doc.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICU capacity planning: trend forecasts, patient risk and demand simulation"};
  app.require_subcommand(1);

  std::string config_file, data_root;
  std::uint64_t seed = 0;
  app.add_option("--config", config_file, "key = value defaults file")->check(CLI::ExistingFile);
  app.add_option("--data-root", data_root, "registry and dataset directory");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic world");
  std::string out_dir;
  synth::WorldConfig world;
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--hospitals", world.n_hospitals, "number of hospitals");
  gen->add_option("--patients", world.n_patients, "number of patients");
  gen->add_option("--days", world.days, "observed days");

  auto* ingest = app.add_subcommand("ingest", "validate and store a dataset directory");
  std::string bundle;
  ingest->add_option("dir", bundle, "directory with hospitals, mobility, admissions and patients tables")->required();

  std::string dataset_id, model_id = "default";
  auto* train_trend = app.add_subcommand("train-trend", "retrain the admission trend model");
  auto* train_risk = app.add_subcommand("train-risk", "retrain the patient hazard models");
  int search_budget = -1;
  for (auto* sub : {train_trend, train_risk}) {
    sub->add_option("--dataset", dataset_id, "dataset id")->required();
    sub->add_option("--model-id", model_id, "registry name");
  }
  train_risk->add_option("--search-budget", search_budget, "pipeline search evaluations (0 keeps the default)");

  auto* search_cmd = app.add_subcommand("search-pipelines", "Bayesian optimization over risk pipelines");
  int budget = 60;
  std::string history_file;
  search_cmd->add_option("--dataset", dataset_id, "dataset id")->required();
  search_cmd->add_option("--budget", budget, "evaluations");
  search_cmd->add_option("--history", history_file, "write the evaluation history as JSON lines");

  auto* forecast = app.add_subcommand("forecast", "admission forecast for a hospital, region or the nation");
  std::string target = "national", mobility_file;
  int horizon = 30, samples = 0;
  bool include_samples = false;
  forecast->add_option("--model-id", model_id, "registry name");
  forecast->add_option("--target", target, "hospital id, region or national");
  forecast->add_option("--horizon", horizon, "days ahead");
  forecast->add_option("--mobility", mobility_file, "future mobility table")->check(CLI::ExistingFile);
  forecast->add_option("--samples", samples, "sample paths");
  forecast->add_flag("--include-samples", include_samples, "emit every sample path");

  auto* simulate = app.add_subcommand("simulate", "ICU demand scenario");
  std::string resolution = "national";
  int repetitions = 0;
  bool summary_only = false;
  simulate->add_option("--model-id", model_id, "registry name");
  simulate->add_option("--resolution", resolution, "hospital, region or national");
  simulate->add_option("--target", target, "hospital id, region or national");
  simulate->add_option("--horizon", horizon, "days ahead");
  simulate->add_option("--repetitions", repetitions, "Monte Carlo repetitions");
  simulate->add_option("--mobility", mobility_file, "future mobility table")->check(CLI::ExistingFile);
  simulate->add_flag("--summary-only", summary_only, "omit per-repetition counters");

  auto* evaluate = app.add_subcommand("evaluate", "benchmark the trend model against both baselines");
  bool as_json = false;
  int eval_hospitals = 20;
  evaluate->add_option("--hospitals", eval_hospitals, "hospitals in the synthetic world");
  evaluate->add_flag("--json", as_json, "JSON report instead of a table");

  auto* serve = app.add_subcommand("serve", "HTTP service");
  std::string host = "127.0.0.1", ui_dir;
  int port = -1;
  serve->add_option("--port", port, "listen port");
  serve->add_option("--host", host, "listen address");
  serve->add_option("--ui-dir", ui_dir, "static scenario UI assets");

  CLI11_PARSE(app, argc, argv);

  try {
    ServiceConfig config = config_file.empty() ? ServiceConfig{} : ServiceConfig::from_file(config_file);
    config.apply_environment();
    if (!data_root.empty()) config.data_root = data_root;
    if (seed_opt->count()) config.seed = seed;
    if (port >= 0) config.port = port;
    config.validate();

    if (gen->parsed()) {
      if (seed_opt->count()) world.seed = seed;
      const auto trend = synth::generate_trend_world(world);
      const auto patients = synth::generate_patient_world(world, trend.hospitals);
      io::write_world(out_dir, trend, patients);
      print({{"out", out_dir}, {"hospitals", trend.hospitals.size()}, {"patients", patients.patients.size()}});
      return 0;
    }
    if (evaluate->parsed()) {
      synth::WorldConfig wc;
      wc.n_hospitals = eval_hospitals;
      if (seed_opt->count()) wc.seed = seed;
      const auto w = synth::generate_trend_world(wc);
      const std::vector<evaluation::Method> methods{evaluation::hgpcp_method(config.trend_config()),
                                                    evaluation::zero_mean_gp_method(),
                                                    evaluation::compartmental_method()};
      const auto report = evaluation::benchmark_report(w, methods, evaluation::evaluation_dates(w));
      if (as_json) print(report.to_json());
      else std::cout << report.to_text();
      return 0;
    }

    Service service(config);
    if (ingest->parsed()) {
      const auto id = service.ingest(fs::path(bundle));
      const auto data = service.dataset(id);
      print({{"dataset_id", id}, {"hospitals", data->trend.hospitals.size()}, {"patients", data->patients.patients.size()}});
    } else if (train_trend->parsed() || train_risk->parsed()) {
      nlohmann::json req{{"dataset_id", dataset_id}, {"kind", train_trend->parsed() ? "trend" : "hazard"}, {"model_id", model_id}};
      if (search_budget >= 0) req["search_budget"] = search_budget;
      print(service.handle_train(req));
    } else if (search_cmd->parsed()) {
      const auto result = search_hazard_pipeline(service.dataset(dataset_id)->patients, budget, config.seed);
      if (!history_file.empty()) {
        std::ofstream h(history_file);
        search::export_history(result, h);
      }
      print({{"best_config", pipeline::to_json(result.best_config)},
             {"best_loss", result.best_loss},
             {"evaluations", result.history.size()}});
    } else if (forecast->parsed()) {
      nlohmann::json req{{"model_id", model_id}, {"hospital_or_region", target}, {"horizon", horizon},
                         {"seed", config.seed}, {"include_samples", include_samples}};
      if (samples > 0) req["samples"] = samples;
      if (!mobility_file.empty()) {
        req["mobility_mode"] = "user-series";
        req["mobility_series"] = mobility_rows(mobility_file);
      }
      print(service.handle_forecast(req));
    } else if (simulate->parsed()) {
      nlohmann::json req{{"model_id", model_id}, {"resolution", resolution}, {"target_id", target},
                         {"horizon", horizon}, {"seed", config.seed}, {"per_repetition", !summary_only}};
      if (repetitions > 0) req["repetitions"] = repetitions;
      if (!mobility_file.empty()) {
        req["mobility_mode"] = "user-series";
        req["mobility_series"] = mobility_rows(mobility_file);
      }
      print(service.handle_simulate(req));
    } else if (serve->parsed()) {
      httplib::Server server;
      install_routes(server, service, ui_dir);
      std::cerr << "listening on " << host << ':' << config.port << '\n';
      if (!server.listen(host, config.port)) throw Error("internal", "cannot listen on port " + std::to_string(config.port));
    }
  } catch (...) {
    const auto e = error_envelope(std::current_exception());
    std::cerr << e.body.dump(2) << '\n';
    return e.status < 500 ? 2 : 1;
  }
  return 0;
}
