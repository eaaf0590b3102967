#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <string_view>

#include "iterforge/common/ids.hpp"
#include "iterforge/labeling/backend.hpp"

namespace iterforge {

using AssetFetcher = std::function<std::string(const std::string& asset_id)>;
// Decides the annotations of one asset from its bytes.
using GroundTruthFn = std::function<Annotations(std::string_view bytes)>;

// Feature-vector payloads: class 1 when w . x + bias > 0, else class 0, as
// a single whole-item box (0 0 1 1). Unparseable payloads get no objects.
GroundTruthFn linear_ground_truth(std::vector<double> weights, double bias);

// Built-in labeling service. Every status() call labels the next |rate|
// items, so a job of n items completes after ceil(n / rate) polls.
class SimLabeler : public LabelBackend {
 public:
  SimLabeler(AssetFetcher fetch, GroundTruthFn truth, std::size_t rate);

  std::string create(const LabelJob& job) override;
  LabelStatus status(const std::string& backend_task_id) override;
  std::vector<LabelResult> results(const std::string& backend_task_id) override;

  // Simulates an outage: every call throws Error(kUnavailable).
  void set_available(bool available) { available_ = available; }
  std::size_t job_count() const;
  std::optional<LabelJob> job(const std::string& backend_task_id) const;

 private:
  struct Job {
    LabelJob job;
    std::size_t labeled = 0;
  };
  void check_available() const;

  AssetFetcher fetch_;
  GroundTruthFn truth_;
  std::size_t rate_;
  std::atomic<bool> available_{true};
  IdSequence ids_{"sim"};
  mutable std::mutex mu_;
  std::map<std::string, Job> jobs_;
};

}  // namespace iterforge
