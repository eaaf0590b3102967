#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterforge/assets/types.hpp"

namespace iterforge {

enum class LabelState { kCreated, kInProgress, kCompleted, kFailed };
std::string_view to_string(LabelState state);
LabelState parse_label_state(std::string_view text);

struct LabelItem {
  std::string asset_id;
  Annotations objects;  // pre-annotations, possibly empty
};

struct LabelJob {
  std::vector<std::string> classes;
  std::string instructions;
  std::optional<std::string> doc_url;
  std::vector<LabelItem> items;
};

struct LabelStatus {
  double progress = 0.0;
  LabelState state = LabelState::kCreated;
};

// Class ids outside the job's class list are kept as-is; a negative id on
// the wire maps to UINT32_MAX so that it is always unknown.
struct LabelResult {
  std::string asset_id;
  Annotations objects;
};

// The labeling service contract. Implementations throw Error(kUnavailable)
// when the service cannot be reached and Error(kNotFound) for unknown ids.
class LabelBackend {
 public:
  virtual ~LabelBackend() = default;
  virtual std::string create(const LabelJob& job) = 0;
  virtual LabelStatus status(const std::string& backend_task_id) = 0;
  // Throws Error(kFailedPrecondition) before completion.
  virtual std::vector<LabelResult> results(const std::string& backend_task_id) = 0;
};

// Wire format of the adapter HTTP contract.
nlohmann::json to_json(const LabelJob& job);
LabelJob label_job_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LabelStatus& status);
LabelStatus label_status_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<LabelResult>& results);
std::vector<LabelResult> label_results_from_json(const nlohmann::json& j);

}  // namespace iterforge
