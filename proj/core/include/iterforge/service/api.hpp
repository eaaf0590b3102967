#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "iterforge/common/error.hpp"
#include "iterforge/service/platform.hpp"

namespace iterforge {

struct ApiRequest {
  std::string method;  // "GET", "POST", ...
  std::string path;    // without the query string
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body = nlohmann::json::object();
};

// HTTP status for an error code.
int http_status_of(ErrorCode code);

// Splits "path?a=1&b=2" into path and decoded query parameters.
void split_target(std::string_view target, std::string& path,
                  std::map<std::string, std::string>& query);

// JSON endpoints over a Platform. Transport-independent so that routing is
// testable without sockets. Errors come back as
//   {"error":{"code":"not_found","message":".."}}
class ApiHandler {
 public:
  explicit ApiHandler(Platform& platform) : p_(platform) {}
  ApiResponse handle(const ApiRequest& request);

 private:
  ApiResponse route(const ApiRequest& request);
  Platform& p_;
};

nlohmann::json snapshot_summary(const DatasetSnapshot& snapshot);
nlohmann::json asset_detail_json(const AssetDetail& detail, const std::vector<std::string>& classes);

}  // namespace iterforge
