#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iterforge/executor/manifest.hpp"
#include "iterforge/executor/workspace.hpp"

namespace iterforge {

enum class OutcomeStatus { kSuccess, kFailure, kBroken };
std::string_view to_string(OutcomeStatus status);

struct TaskOutcome {
  OutcomeStatus status = OutcomeStatus::kFailure;
  std::vector<std::filesystem::path> artifacts;
  std::optional<std::filesystem::path> archived_intermediates;
  std::string exit_detail;
  std::optional<double> accuracy;  // train only, from out/result.json
  std::optional<std::filesystem::path> stored_log;
};

struct ExitStatus {
  enum class Kind { kExited, kSignaled, kSpawnFailed };
  Kind kind = Kind::kExited;
  int code = 0;  // exit code, signal number or errno
  bool stop_requested = false;
};

struct InstanceOptions {
  std::filesystem::path archive_root;  // failed/broken out/ copies go here
  std::filesystem::path log_root;      // captured logs are copied here
  std::chrono::milliseconds stop_grace{10000};
};

// A launched executor process. The process runs in its own process group
// with the workspace root as working directory and stdout/stderr appended
// to out/log.txt. finalize() produces the outcome exactly once; later
// calls return the same outcome.
class ExecutorInstance {
 public:
  static std::shared_ptr<ExecutorInstance> launch(const ExecutorManifest& manifest,
                                                  const Workspace& workspace,
                                                  std::span<const int> gpu_ids,
                                                  InstanceOptions options);
  ~ExecutorInstance();

  const Workspace& workspace() const { return workspace_; }
  pid_t pid() const { return pid_; }
  bool spawned() const { return pid_ > 0; }

  // Non-blocking reap.
  std::optional<ExitStatus> poll();
  ExitStatus wait();

  TaskOutcome finalize(const ExitStatus& status);
  // SIGTERM to the group, SIGKILL after the grace period. If the process
  // had already exited, returns the natural outcome instead.
  TaskOutcome stop();
  std::optional<TaskOutcome> outcome() const;

 private:
  ExecutorInstance(Workspace workspace, InstanceOptions options);
  std::optional<ExitStatus> reap_locked(bool block);
  TaskOutcome finalize_locked(const ExitStatus& status);

  Workspace workspace_;
  InstanceOptions options_;
  pid_t pid_ = -1;
  int spawn_errno_ = 0;
  mutable std::mutex mu_;
  std::optional<ExitStatus> exit_;
  std::optional<TaskOutcome> outcome_;
};

// Output validation used by finalize(): success requires the kind's
// declared outputs to exist and parse. Returns an error description or
// nullopt, and fills |outcome|'s artifacts / accuracy.
std::optional<std::string> collect_outputs(const Workspace& ws, TaskOutcome& outcome);

// Reads out/result.tsv as (asset id, score) in file order.
std::vector<std::pair<std::string, double>> read_mining_result(const std::filesystem::path& file);

}  // namespace iterforge
