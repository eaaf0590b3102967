#include "iterforge/progress/event.hpp"

#include <algorithm>

namespace iterforge {

bool is_terminal_code(int state_code) {
  return state_code >= static_cast<int>(StateCode::kDone);
}

int state_code_of(TaskState state) {
  switch (state) {
    case TaskState::kPending:
    case TaskState::kPreparing:
      return static_cast<int>(StateCode::kPending);
    case TaskState::kRunning:
      return static_cast<int>(StateCode::kRunning);
    case TaskState::kDone:
      return static_cast<int>(StateCode::kDone);
    case TaskState::kFailure:
      return static_cast<int>(StateCode::kFailure);
    case TaskState::kBroken:
      return static_cast<int>(StateCode::kBroken);
  }
  return static_cast<int>(StateCode::kPending);
}

nlohmann::json ProgressEvent::to_json() const {
  return {
      {"task_id", task_id},
      {"user_id", user_id},
      {"progress", progress},
      {"state_code", state_code},
      {"state_message", state_message},
      {"error_message", error_message},
      {"timestamp_ms", timestamp_ms},
  };
}

ProgressEvent ProgressEvent::from_json(const nlohmann::json& j) {
  ProgressEvent e;
  e.task_id = j.at("task_id").get<std::string>();
  e.user_id = j.at("user_id").get<std::string>();
  e.progress = j.value("progress", 0.0);
  e.state_code = j.value("state_code", 1);
  e.state_message = j.value("state_message", "");
  e.error_message = j.value("error_message", "");
  e.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  return e;
}

ProgressEvent event_from_task(const TaskRecord& task, std::int64_t timestamp_ms) {
  ProgressEvent e;
  e.user_id = task.user_id;
  e.task_id = task.task_id;
  e.state_code = state_code_of(task.state);
  e.progress = task.state == TaskState::kDone ? 1.0 : 0.0;
  e.state_message = std::string(to_string(task.state));
  if (task.state == TaskState::kFailure || task.state == TaskState::kBroken) {
    e.error_message = task.error_message;
  }
  e.timestamp_ms = timestamp_ms;
  return e;
}

std::optional<ProgressEvent> merge_status(const std::optional<ProgressEvent>& current,
                                          const ProgressEvent& incoming) {
  if (!current) return incoming;
  bool was_terminal = is_terminal_code(current->state_code);
  bool now_terminal = is_terminal_code(incoming.state_code);
  if (was_terminal && !now_terminal) return std::nullopt;
  if (incoming.timestamp_ms < current->timestamp_ms && (was_terminal || !now_terminal)) return std::nullopt;
  ProgressEvent merged = incoming;
  merged.progress = std::max(current->progress, incoming.progress);
  return merged;
}

}  // namespace iterforge
