#include "icuplan/server.hpp"

#include "icuplan/errors.hpp"
#include "icuplan/io.hpp"
#include "../json_eigen.hpp"

namespace icu::service {
namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (...) {
      const auto e = error_envelope(std::current_exception());
      reply(res, e.body, e.status);
    }
  };
}

nlohmann::json parse_body(const httplib::Request& req) { return nlohmann::json::parse(req.body); }

}  // namespace

ErrorResponse error_envelope(std::exception_ptr error) {
  ErrorResponse r;
  nlohmann::json details = nlohmann::json::object();
  std::string code = "internal", message = "unknown error";
  try {
    std::rethrow_exception(error);
  } catch (const SchemaError& e) {
    code = e.code(), message = e.what(), r.status = 422;
    details = {{"row", e.row()}, {"column", e.column()}};
  } catch (const IntegrityError& e) {
    code = e.code(), message = e.what(), r.status = 422;
  } catch (const NotFound& e) {
    code = e.code(), message = e.what(), r.status = 404;
  } catch (const InvalidArgument& e) {
    code = e.code(), message = e.what(), r.status = 400;
  } catch (const NumericalError& e) {
    code = e.code(), message = e.what(), r.status = 500;
    details = {{"step", e.step()}};
  } catch (const Error& e) {
    code = e.code(), message = e.what(), r.status = 500;
  } catch (const nlohmann::json::exception& e) {
    code = "bad_request", message = e.what(), r.status = 400;
  } catch (const std::exception& e) {
    message = e.what();
  } catch (...) {
  }
  r.body = {{"code", code}, {"message", message}, {"details", details}, {"schema_version", kSchemaVersion}};
  return r;
}

void install_routes(httplib::Server& server, Service& service, const std::filesystem::path& ui_dir) {
  server.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
    reply(res, {{"status", "ok"}, {"schema_version", kSchemaVersion}});
  }));
  server.Post("/datasets", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_ingest(parse_body(req)), 201);
  }));
  server.Post("/train", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_train(parse_body(req)), 201);
  }));
  server.Get("/models", guarded([&service](const httplib::Request&, httplib::Response& res) {
    reply(res, service.handle_models());
  }));
  server.Get(R"(/models/([A-Za-z0-9_-]+)/metrics)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_metrics(req.matches[1].str()));
  }));
  server.Post("/forecast", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_forecast(parse_body(req)));
  }));
  server.Post("/simulate", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_simulate(parse_body(req)));
  }));
  server.Post("/simulate/cohort", guarded([&service](const httplib::Request& req, httplib::Response& res) {
    reply(res, service.handle_cohort(parse_body(req)));
  }));
  server.Post("/mobility/parse", guarded([](const httplib::Request& req, httplib::Response& res) {
    const auto series = io::parse_mobility_series(req.body);
    reply(res, {{"columns", io::mobility_column_names(series.cols())}, {"mobility_series", detail::rows_json(series)},
                {"schema_version", kSchemaVersion}});
  }));
  server.Get("/schema/mobility", guarded([](const httplib::Request&, httplib::Response& res) {
    reply(res, {{"columns", io::mobility_column_names(6)}, {"min", -1.0}, {"max", 1.0},
                {"schema_version", kSchemaVersion}});
  }));
  if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) server.set_mount_point("/", ui_dir.string());
}

}  // namespace icu::service
