#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "iterforge/assets/asset_store.hpp"
#include "iterforge/assets/model_store.hpp"
#include "iterforge/common/database.hpp"
#include "iterforge/executor/manifest.hpp"
#include "iterforge/iteration/engine.hpp"
#include "iterforge/labeling/gateway.hpp"
#include "iterforge/labeling/sim_labeler.hpp"
#include "iterforge/progress/progress_bus.hpp"
#include "iterforge/progress/push_hub.hpp"
#include "iterforge/scheduler/scheduler.hpp"
#include "iterforge/service/config.hpp"

namespace iterforge {

// Exclusive advisory lock on <store_root>/LOCK, held for the lifetime of
// the object. Throws Error(kUnavailable) when another holder exists.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& store_root);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

struct OpenOptions {
  // Marks tasks left in flight by a previous process broken and
  // reschedules pending ones.
  bool recover = true;
  // Starts the progress poll and dispatch loops.
  bool start_background = true;
};

// Store layout under |store_root|:
//   LOCK  platform.db  executors.json  progress.queue
//   assets/  models/  labels/  audit/  results/<task>/
//   workspaces/<task>/  archive/<task>/  logs/
class Platform {
 public:
  static std::unique_ptr<Platform> open(ServiceConfig config, OpenOptions options = {});
  ~Platform();
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  // Stops the engine, drains the scheduler per the configured policy and
  // flushes progress. Idempotent.
  void shutdown();

  const ServiceConfig& config() const { return config_; }
  AssetStore& assets() { return *assets_; }
  ModelStore& models() { return *models_; }
  ExecutorRegistry& executors() { return *executors_; }
  Scheduler& scheduler() { return *scheduler_; }
  ProgressBus& bus() { return *bus_; }
  PushHub& hub() { return *hub_; }
  LabelingGateway& labels() { return *labels_; }
  IterationEngine& engine() { return *engine_; }
  // Null when an external labeling service is configured.
  std::shared_ptr<SimLabeler> sim_labeler() { return sim_; }

  // Latest persisted progress status, or a synthetic pending 0.0 status
  // for a known task that has none yet. Throws Error(kNotFound).
  ProgressEvent task_status(const std::string& task_id) const;

  std::filesystem::path workspace_dir(const std::string& task_id) const;
  std::filesystem::path results_dir(const std::string& task_id) const;

 private:
  Platform(ServiceConfig config, OpenOptions options);
  std::map<std::string, Annotations> pre_annotate(const SnapshotId& dataset, const ModelId& model,
                                                  const std::string& user_id);

  friend class PlatformRunner;

  ServiceConfig config_;
  std::unique_ptr<StoreLock> lock_;
  std::shared_ptr<Database> db_;
  std::unique_ptr<AssetStore> assets_;
  std::unique_ptr<ModelStore> models_;
  std::unique_ptr<ExecutorRegistry> executors_;
  std::shared_ptr<PushHub> hub_;
  std::shared_ptr<StatusStore> status_;
  std::unique_ptr<ProgressBus> bus_;
  std::shared_ptr<SimLabeler> sim_;
  std::unique_ptr<LabelingGateway> labels_;
  std::unique_ptr<Scheduler> scheduler_;
  std::unique_ptr<IterationEngine> engine_;
  bool shut_down_ = false;
};

}  // namespace iterforge
