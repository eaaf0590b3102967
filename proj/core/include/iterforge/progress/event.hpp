#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "iterforge/scheduler/task.hpp"

namespace iterforge {

// 1 pending, 2 running, 3 done, 4 failure, 5 broken. Codes 1-4 match the
// executor monitor file.
enum class StateCode : int { kPending = 1, kRunning = 2, kDone = 3, kFailure = 4, kBroken = 5 };

bool is_terminal_code(int state_code);
int state_code_of(TaskState state);

struct ProgressEvent {
  std::string user_id;
  std::string task_id;
  double progress = 0.0;
  int state_code = static_cast<int>(StateCode::kPending);
  std::string state_message;
  std::string error_message;
  std::int64_t timestamp_ms = 0;

  // The flat push-frame document.
  nlohmann::json to_json() const;
  static ProgressEvent from_json(const nlohmann::json& j);
  friend bool operator==(const ProgressEvent&, const ProgressEvent&) = default;
};

// Event describing a scheduler-side change of |task|.
ProgressEvent event_from_task(const TaskRecord& task, std::int64_t timestamp_ms);

// Folds |incoming| onto the last persisted status. Returns nullopt when the
// event must be dropped: |current| is terminal and |incoming| is not, or
// |incoming| is older than |current| without being the first terminal
// state. Progress never decreases.
std::optional<ProgressEvent> merge_status(const std::optional<ProgressEvent>& current,
                                          const ProgressEvent& incoming);

}  // namespace iterforge
