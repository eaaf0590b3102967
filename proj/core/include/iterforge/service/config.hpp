#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterforge/scheduler/scheduler.hpp"

namespace iterforge {

struct SimLabelerConfig {
  std::size_t rate = 100;  // items labeled per status poll
  std::vector<double> weights = std::vector<double>(8, 1.0);
  double bias = 0.0;
};

struct ServiceConfig {
  std::filesystem::path store_root = "iterforge-store";
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  int gpu_pool_capacity = 2;
  int poll_interval_ms = 500;
  int dispatch_interval_ms = 1000;
  // "sim" for the built-in labeler, otherwise the base URL of a labeling
  // service speaking the adapter contract.
  std::string labeler_backend = "sim";
  int stop_grace_seconds = 10;
  int label_poll_ms = 200;
  DrainPolicy drain = DrainPolicy::kBroken;
  SimLabelerConfig sim_labeler;

  // Throws Error(kInvalidArgument) on out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ServiceConfig from_json(const nlohmann::json& j);
};

// ITERFORGE_CONFIG, when set, takes precedence over |cli_path|.
std::optional<std::filesystem::path> resolve_config_path(
    const std::optional<std::filesystem::path>& cli_path);
ServiceConfig load_service_config(const std::filesystem::path& file);

}  // namespace iterforge
