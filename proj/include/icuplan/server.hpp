#pragma once

// HTTP front end for the service. Request and response bodies are JSON
// documents carrying a schema_version; failures use one envelope:
//
//   {"code": "...", "message": "...", "details": {...}, "schema_version": 1}

#include <exception>
#include <filesystem>
#include <json.hpp>

// Before httplib: <resolv.h> defines a `_res` macro that breaks Eigen.
#include "icuplan/service.hpp"

#include <httplib.h>

namespace icu::service {

struct ErrorResponse {
  int status = 500;
  nlohmann::json body;
};

// Client mistakes map to 4xx, everything else to 500.
ErrorResponse error_envelope(std::exception_ptr error);

// Static assets under `ui_dir` are served at / when the directory exists.
void install_routes(httplib::Server& server, Service& service, const std::filesystem::path& ui_dir = {});

}  // namespace icu::service
