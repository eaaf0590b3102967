#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "iterforge/assets/asset_store.hpp"
#include "iterforge/assets/model_store.hpp"
#include "iterforge/common/database.hpp"
#include "iterforge/common/ids.hpp"
#include "iterforge/iteration/state.hpp"
#include "iterforge/scheduler/scheduler.hpp"

namespace iterforge {

class ProjectRepository {
 public:
  explicit ProjectRepository(std::shared_ptr<Database> db);
  void save(const IterationState& state);
  std::vector<IterationState> list() const;

 private:
  std::shared_ptr<Database> db_;
};

// One line per stage transition in <dir>/<project id>.jsonl.
class AuditLog {
 public:
  explicit AuditLog(std::filesystem::path dir);
  void append(const std::string& project_id, const nlohmann::json& record);
  std::vector<nlohmann::json> read(const std::string& project_id) const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// Drives the mine -> label -> update-data -> train -> evaluate loop of
// every project. Stage work runs as scheduler tasks; evaluate runs inline.
// Loop state mutations are serialized on one mutex and persisted on every
// change.
class IterationEngine {
 public:
  IterationEngine(Scheduler& scheduler, AssetStore& assets, ModelStore& models,
                  std::shared_ptr<ProjectRepository> repository, std::filesystem::path audit_dir);
  ~IterationEngine();
  IterationEngine(const IterationEngine&) = delete;
  IterationEngine& operator=(const IterationEngine&) = delete;

  // Applies stage tasks that finished while the engine was not running.
  void start();
  void stop();

  std::string create_project(ProjectConfig config);
  IterationState get(const std::string& project_id) const;
  std::vector<IterationState> list() const;

  StageAction next_action(const std::string& project_id) const;
  // Submits (or for evaluate, performs) the next stage. Throws
  // Error(kFailedPrecondition) when the project is final or a stage task
  // is still running.
  IterationState advance(const std::string& project_id);
  // Stops the running stage task and finishes with M_o = M_i.
  IterationState interrupt(const std::string& project_id);
  void set_auto_advance(const std::string& project_id, bool enabled);

  std::vector<nlohmann::json> audit(const std::string& project_id) const;

  // Blocks until |pred| holds for the project's state or the timeout.
  std::optional<IterationState> wait_until(const std::string& project_id,
                                           const std::function<bool(const IterationState&)>& pred,
                                           std::chrono::milliseconds timeout) const;

 private:
  void on_task(const TaskRecord& task);
  void worker_loop(std::stop_token stop);
  void handle_terminal(const TaskRecord& task);

  IterationState& state_locked(const std::string& project_id);
  void persist_locked(IterationState& state);
  void audit_locked(const IterationState& state, const std::string& event, IterStage from,
                    nlohmann::json extra = nlohmann::json::object());
  StageAction action_locked(const IterationState& state) const;
  // Performs one step; returns true when another step may follow without
  // waiting for a task.
  bool step_locked(IterationState& state);
  void drive_locked(IterationState& state);
  void apply_result_locked(IterationState& state, const TaskRecord& task);
  void evaluate_locked(IterationState& state);
  SnapshotId select_mined_locked(const IterationState& state, const TaskRecord& task);

  Scheduler& scheduler_;
  AssetStore& assets_;
  ModelStore& models_;
  std::shared_ptr<ProjectRepository> repository_;
  AuditLog audit_;
  IdSequence ids_{"p"};

  mutable std::mutex mu_;
  mutable std::condition_variable changed_;
  std::map<std::string, IterationState> projects_;

  std::mutex queue_mu_;
  std::condition_variable_any queue_cv_;
  std::deque<TaskRecord> queue_;
  std::jthread worker_;
};

}  // namespace iterforge
