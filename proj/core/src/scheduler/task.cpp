#include "iterforge/scheduler/task.hpp"

#include <array>

#include "iterforge/common/error.hpp"

namespace iterforge {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {"import", "dataset-op", "label",
                                                        "train",  "mine",       "infer"};
constexpr std::array<std::string_view, 6> kStateNames = {"pending", "preparing", "running",
                                                         "done",    "failure",   "broken"};

}  // namespace

std::string_view to_string(TaskKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

TaskKind parse_task_kind(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == text) return static_cast<TaskKind>(i);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown task kind: " + std::string(text));
}

std::string_view to_string(TaskState state) {
  return kStateNames[static_cast<std::size_t>(state)];
}

TaskState parse_task_state(std::string_view text) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i) {
    if (kStateNames[i] == text) return static_cast<TaskState>(i);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown task state: " + std::string(text));
}

bool is_terminal(TaskState state) {
  return state == TaskState::kDone || state == TaskState::kFailure || state == TaskState::kBroken;
}

bool needs_gpu(TaskKind kind) {
  return kind == TaskKind::kTrain || kind == TaskKind::kMine || kind == TaskKind::kInfer;
}

bool is_valid_transition(TaskState from, TaskState to) {
  switch (from) {
    case TaskState::kPending:
      return to == TaskState::kPreparing || to == TaskState::kFailure || to == TaskState::kBroken;
    case TaskState::kPreparing:
      return to == TaskState::kRunning;
    case TaskState::kRunning:
      return is_terminal(to);
    default:
      return false;
  }
}

std::string_view to_string(SubtaskKind kind) {
  switch (kind) {
    case SubtaskKind::kPrepareData: return "prepare-data";
    case SubtaskKind::kDatasetOp: return "dataset-op";
    case SubtaskKind::kAllocateGpu: return "allocate-gpu";
    case SubtaskKind::kRunExecutor: return "run-executor";
    case SubtaskKind::kCollectResults: return "collect-results";
    case SubtaskKind::kReleaseGpu: return "release-gpu";
    case SubtaskKind::kLabelSync: return "label-sync";
  }
  return "unknown";
}

std::vector<AtomicSubtask> decompose(TaskKind kind) {
  switch (kind) {
    case TaskKind::kTrain:
    case TaskKind::kMine:
    case TaskKind::kInfer:
      return {
          {0, SubtaskKind::kPrepareData, {}},
          {1, SubtaskKind::kAllocateGpu, {0}},
          {2, SubtaskKind::kRunExecutor, {0, 1}},
          {3, SubtaskKind::kCollectResults, {2}},
          {4, SubtaskKind::kReleaseGpu, {3}},
      };
    case TaskKind::kDatasetOp:
      return {{0, SubtaskKind::kDatasetOp, {}}};
    case TaskKind::kImport:
      return {{0, SubtaskKind::kPrepareData, {}}};
    case TaskKind::kLabel:
      return {{0, SubtaskKind::kLabelSync, {}}};
  }
  throw Error(ErrorCode::kInvalidArgument, "cannot decompose unknown task kind");
}

nlohmann::json TaskRecord::to_json() const {
  nlohmann::json j = {
      {"task_id", task_id},
      {"user_id", user_id},
      {"kind", to_string(kind)},
      {"state", to_string(state)},
      {"progress", progress},
      {"created_ms", created_ms},
      {"started_ms", started_ms},
      {"finished_ms", finished_ms},
      {"gpu_count", gpu_count},
      {"gpu_grant", gpu_grant},
      {"inputs", inputs},
      {"outputs", outputs},
      {"error_message", error_message},
  };
  return j;
}

TaskRecord TaskRecord::from_json(const nlohmann::json& j) {
  TaskRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  r.user_id = j.value("user_id", "u1");
  r.kind = parse_task_kind(j.at("kind").get<std::string>());
  r.state = parse_task_state(j.at("state").get<std::string>());
  r.progress = j.value("progress", 0.0);
  r.created_ms = j.value("created_ms", std::int64_t{0});
  r.started_ms = j.value("started_ms", std::int64_t{0});
  r.finished_ms = j.value("finished_ms", std::int64_t{0});
  r.gpu_count = j.value("gpu_count", 0);
  r.gpu_grant = j.value("gpu_grant", std::vector<int>{});
  r.inputs = j.value("inputs", nlohmann::json::object());
  r.outputs = j.value("outputs", nlohmann::json::object());
  r.error_message = j.value("error_message", "");
  return r;
}

}  // namespace iterforge
