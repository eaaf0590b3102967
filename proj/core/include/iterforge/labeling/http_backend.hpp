#pragma once

#include <memory>
#include <string>
#include <thread>

#include "iterforge/labeling/backend.hpp"

namespace iterforge {

// Client for an external labeling service speaking
//   POST /tasks                -> {"task_id":..}
//   GET  /tasks/{id}           -> {"progress":0.5,"state":"in-progress"}
//   GET  /tasks/{id}/results   -> [{"asset_id":..,"objects":[{"class_id":..,"box":[..]}]}]
class HttpLabelBackend : public LabelBackend {
 public:
  // |base_url| like "http://127.0.0.1:8090".
  explicit HttpLabelBackend(std::string base_url, int timeout_ms = 5000);

  std::string create(const LabelJob& job) override;
  LabelStatus status(const std::string& backend_task_id) override;
  std::vector<LabelResult> results(const std::string& backend_task_id) override;

 private:
  std::string base_url_;
  int timeout_ms_;
};

// Serves any backend over the adapter contract on 127.0.0.1. Used to run
// the HTTP client against an in-process service.
class LabelBackendServer {
 public:
  explicit LabelBackendServer(std::shared_ptr<LabelBackend> backend, int port = 0);
  ~LabelBackendServer();
  LabelBackendServer(const LabelBackendServer&) = delete;
  LabelBackendServer& operator=(const LabelBackendServer&) = delete;

  int port() const { return port_; }
  std::string url() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace iterforge
