#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace iterforge {

enum class TaskKind { kImport, kDatasetOp, kLabel, kTrain, kMine, kInfer };
enum class TaskState { kPending, kPreparing, kRunning, kDone, kFailure, kBroken };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);
std::string_view to_string(TaskState state);
TaskState parse_task_state(std::string_view text);

bool is_terminal(TaskState state);
bool needs_gpu(TaskKind kind);
// pending->preparing->running->terminal, plus pending->failure|broken.
bool is_valid_transition(TaskState from, TaskState to);

struct TaskSpec {
  std::string user_id = "u1";
  TaskKind kind = TaskKind::kDatasetOp;
  int gpu_count = -1;  // -1 picks 1 for train/mine/infer and 0 otherwise
  nlohmann::json inputs = nlohmann::json::object();
};

struct TaskRecord {
  std::string task_id;
  std::string user_id = "u1";
  TaskKind kind = TaskKind::kDatasetOp;
  TaskState state = TaskState::kPending;
  double progress = 0.0;
  std::int64_t created_ms = 0;
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  int gpu_count = 0;
  std::vector<int> gpu_grant;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  std::string error_message;

  nlohmann::json to_json() const;
  static TaskRecord from_json(const nlohmann::json& j);
  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

enum class SubtaskKind {
  kPrepareData,
  kDatasetOp,
  kAllocateGpu,
  kRunExecutor,
  kCollectResults,
  kReleaseGpu,
  kLabelSync,
};

std::string_view to_string(SubtaskKind kind);

struct AtomicSubtask {
  int id = 0;
  SubtaskKind kind = SubtaskKind::kPrepareData;
  std::vector<int> depends_on;
};

// Ordered plan for one task. Subtask ids are indices into the result, and
// every dependency points to an earlier entry.
std::vector<AtomicSubtask> decompose(TaskKind kind);

}  // namespace iterforge
