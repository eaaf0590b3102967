#include "iterforge/service/config.hpp"

#include <cstdlib>
#include <set>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

namespace iterforge {

namespace fs = std::filesystem;

void ServiceConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, "config: " + what);
  };
  require(!store_root.empty(), "store_root is empty");
  require(port >= 0 && port <= 65535, "port out of range");
  require(gpu_pool_capacity >= 1, "gpu_pool_capacity must be >= 1");
  require(poll_interval_ms > 0, "poll_interval_ms must be > 0");
  require(dispatch_interval_ms > 0, "dispatch_interval_ms must be > 0");
  require(stop_grace_seconds >= 0, "stop_grace_seconds must be >= 0");
  require(label_poll_ms > 0, "label_poll_ms must be > 0");
  require(!labeler_backend.empty(), "labeler_backend is empty");
  require(labeler_backend == "sim" || labeler_backend.rfind("http://", 0) == 0,
          "labeler_backend must be \"sim\" or an http:// URL");
  require(sim_labeler.rate >= 1, "sim_labeler.rate must be >= 1");
  require(!sim_labeler.weights.empty(), "sim_labeler.weights is empty");
}

nlohmann::json ServiceConfig::to_json() const {
  return {{"store_root", store_root.string()},
          {"bind_address", bind_address},
          {"port", port},
          {"gpu_pool_capacity", gpu_pool_capacity},
          {"poll_interval_ms", poll_interval_ms},
          {"dispatch_interval_ms", dispatch_interval_ms},
          {"labeler_backend", labeler_backend},
          {"stop_grace_seconds", stop_grace_seconds},
          {"label_poll_ms", label_poll_ms},
          {"drain", std::string(to_string(drain))},
          {"sim_labeler",
           {{"rate", sim_labeler.rate},
            {"weights", sim_labeler.weights},
            {"bias", sim_labeler.bias}}}};
}

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
  static const std::set<std::string> known = {
      "store_root",   "bind_address",       "port",          "gpu_pool_capacity",
      "poll_interval_ms", "dispatch_interval_ms", "labeler_backend", "stop_grace_seconds",
      "label_poll_ms", "drain",             "sim_labeler"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::kInvalidArgument, "config: unknown key " + key);
  }
  ServiceConfig c;
  try {
    c.store_root = j.value("store_root", c.store_root.string());
    c.bind_address = j.value("bind_address", c.bind_address);
    c.port = j.value("port", c.port);
    c.gpu_pool_capacity = j.value("gpu_pool_capacity", c.gpu_pool_capacity);
    c.poll_interval_ms = j.value("poll_interval_ms", c.poll_interval_ms);
    c.dispatch_interval_ms = j.value("dispatch_interval_ms", c.dispatch_interval_ms);
    c.labeler_backend = j.value("labeler_backend", c.labeler_backend);
    c.stop_grace_seconds = j.value("stop_grace_seconds", c.stop_grace_seconds);
    c.label_poll_ms = j.value("label_poll_ms", c.label_poll_ms);
    if (j.contains("drain")) c.drain = parse_drain_policy(j["drain"].get<std::string>());
    if (j.contains("sim_labeler")) {
      const auto& s = j["sim_labeler"];
      c.sim_labeler.rate = s.value("rate", c.sim_labeler.rate);
      c.sim_labeler.weights = s.value("weights", c.sim_labeler.weights);
      c.sim_labeler.bias = s.value("bias", c.sim_labeler.bias);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::optional<fs::path> resolve_config_path(const std::optional<fs::path>& cli_path) {
  if (const char* env = std::getenv("ITERFORGE_CONFIG"); env && *env) return fs::path(env);
  return cli_path;
}

ServiceConfig load_service_config(const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "config " + file.string() + ": " + e.what());
  }
  ServiceConfig c = ServiceConfig::from_json(j);
  if (c.store_root.is_relative()) c.store_root = fs::absolute(file).parent_path() / c.store_root;
  return c;
}

}  // namespace iterforge
