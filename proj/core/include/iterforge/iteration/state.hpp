#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterforge/assets/types.hpp"

namespace iterforge {

enum class IterStage { kMine, kLabel, kUpdateData, kTrain, kEvaluate, kFinished, kExhausted };

std::string_view to_string(IterStage stage);
IterStage parse_iter_stage(std::string_view text);
bool is_final(IterStage stage);

struct ProjectConfig {
  std::string name;
  std::string user_id = "u1";
  std::vector<std::string> class_names;
  SnapshotId data_superset;
  std::optional<SnapshotId> initial_data;
  SnapshotId validation;  // held fixed for every round
  double target_accuracy = 0.9;
  std::size_t mining_batch_size = 50;
  bool auto_advance = false;
  std::optional<ModelId> initial_model;
  std::string train_executor;  // "" = any registered train executor
  std::string mine_executor;
  nlohmann::json train_params = nlohmann::json::object();
  nlohmann::json mine_params = nlohmann::json::object();
  int gpu_count = 1;

  nlohmann::json to_json() const;
  static ProjectConfig from_json(const nlohmann::json& j);
};

struct RoundRecord {
  std::size_t round = 0;  // i after the evaluate that closed the round
  std::size_t training_size = 0;
  double accuracy = 0.0;
  ModelId model;
  SnapshotId training_data;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

// Loop state of one project. Field names follow the loop's symbols:
// round = i, training_data = D_i, mined_batch = d_i, current_model = M_i,
// current_accuracy = Acc_i, output_model = M_o.
struct IterationState {
  std::string project_id;
  ProjectConfig config;
  std::size_t round = 0;
  IterStage stage = IterStage::kLabel;
  std::optional<SnapshotId> training_data;
  std::optional<SnapshotId> candidates;
  std::optional<SnapshotId> mined_batch;
  std::optional<SnapshotId> labeled_batch;
  std::optional<ModelId> current_model;
  double current_accuracy = 0.0;
  std::optional<ModelId> trained_model;  // trained, awaiting evaluate
  std::optional<ModelId> output_model;
  std::optional<std::string> stage_task_id;
  bool stage_failed = false;
  std::string stage_error;
  bool interrupted = false;
  std::string warning;
  std::vector<RoundRecord> history;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;

  nlohmann::json to_json() const;
  static IterationState from_json(const nlohmann::json& j);
};

struct StageAction {
  std::string project_id;
  IterStage stage = IterStage::kFinished;
  bool available = false;    // advance() would do something
  bool in_progress = false;  // the stage task is still running
  bool retry = false;        // the previous attempt of this stage failed
  std::optional<std::string> task_id;
  std::string description;
  nlohmann::json spec = nlohmann::json::object();  // prefilled task spec

  nlohmann::json to_json() const;
};

}  // namespace iterforge
