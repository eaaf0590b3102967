#include "iterforge/iteration/state.hpp"

#include <array>

#include "iterforge/common/error.hpp"

namespace iterforge {

namespace {

constexpr std::array<std::string_view, 7> kStageNames = {
    "mine", "label", "update-data", "train", "evaluate", "finished", "exhausted"};

template <typename Id>
nlohmann::json opt(const std::optional<Id>& id) {
  return id ? nlohmann::json(id->value) : nlohmann::json();
}

template <typename Id>
std::optional<Id> opt_id(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
  return Id{j[key].get<std::string>()};
}

}  // namespace

std::string_view to_string(IterStage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

IterStage parse_iter_stage(std::string_view text) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == text) return static_cast<IterStage>(i);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown stage: " + std::string(text));
}

bool is_final(IterStage stage) {
  return stage == IterStage::kFinished || stage == IterStage::kExhausted;
}

nlohmann::json ProjectConfig::to_json() const {
  return {
      {"name", name},
      {"user_id", user_id},
      {"class_names", class_names},
      {"data_superset", data_superset.value},
      {"initial_data", opt(initial_data)},
      {"validation", validation.value},
      {"target_accuracy", target_accuracy},
      {"mining_batch_size", mining_batch_size},
      {"auto_advance", auto_advance},
      {"initial_model", opt(initial_model)},
      {"train_executor", train_executor},
      {"mine_executor", mine_executor},
      {"train_params", train_params},
      {"mine_params", mine_params},
      {"gpu_count", gpu_count},
  };
}

ProjectConfig ProjectConfig::from_json(const nlohmann::json& j) {
  ProjectConfig c;
  c.name = j.value("name", "");
  c.user_id = j.value("user_id", "u1");
  c.class_names = j.at("class_names").get<std::vector<std::string>>();
  c.data_superset = SnapshotId{j.at("data_superset").get<std::string>()};
  c.initial_data = opt_id<SnapshotId>(j, "initial_data");
  c.validation = SnapshotId{j.at("validation").get<std::string>()};
  c.target_accuracy = j.at("target_accuracy").get<double>();
  c.mining_batch_size = j.value("mining_batch_size", std::size_t{50});
  c.auto_advance = j.value("auto_advance", false);
  c.initial_model = opt_id<ModelId>(j, "initial_model");
  c.train_executor = j.value("train_executor", "");
  c.mine_executor = j.value("mine_executor", "");
  c.train_params = j.value("train_params", nlohmann::json::object());
  c.mine_params = j.value("mine_params", nlohmann::json::object());
  c.gpu_count = j.value("gpu_count", 1);
  return c;
}

nlohmann::json IterationState::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : history) {
    hist.push_back({{"round", h.round},
                    {"training_size", h.training_size},
                    {"accuracy", h.accuracy},
                    {"model", h.model.value},
                    {"training_data", h.training_data.value}});
  }
  return {
      {"project_id", project_id},
      {"config", config.to_json()},
      {"round", round},
      {"stage", to_string(stage)},
      {"training_data", opt(training_data)},
      {"candidates", opt(candidates)},
      {"mined_batch", opt(mined_batch)},
      {"labeled_batch", opt(labeled_batch)},
      {"current_model", opt(current_model)},
      {"current_accuracy", current_accuracy},
      {"trained_model", opt(trained_model)},
      {"output_model", opt(output_model)},
      {"stage_task_id", stage_task_id ? nlohmann::json(*stage_task_id) : nlohmann::json()},
      {"stage_failed", stage_failed},
      {"stage_error", stage_error},
      {"interrupted", interrupted},
      {"warning", warning},
      {"history", hist},
      {"created_ms", created_ms},
      {"updated_ms", updated_ms},
  };
}

IterationState IterationState::from_json(const nlohmann::json& j) {
  IterationState s;
  s.project_id = j.at("project_id").get<std::string>();
  s.config = ProjectConfig::from_json(j.at("config"));
  s.round = j.value("round", std::size_t{0});
  s.stage = parse_iter_stage(j.at("stage").get<std::string>());
  s.training_data = opt_id<SnapshotId>(j, "training_data");
  s.candidates = opt_id<SnapshotId>(j, "candidates");
  s.mined_batch = opt_id<SnapshotId>(j, "mined_batch");
  s.labeled_batch = opt_id<SnapshotId>(j, "labeled_batch");
  s.current_model = opt_id<ModelId>(j, "current_model");
  s.current_accuracy = j.value("current_accuracy", 0.0);
  s.trained_model = opt_id<ModelId>(j, "trained_model");
  s.output_model = opt_id<ModelId>(j, "output_model");
  if (j.contains("stage_task_id") && j["stage_task_id"].is_string()) {
    s.stage_task_id = j["stage_task_id"].get<std::string>();
  }
  s.stage_failed = j.value("stage_failed", false);
  s.stage_error = j.value("stage_error", "");
  s.interrupted = j.value("interrupted", false);
  s.warning = j.value("warning", "");
  for (const auto& h : j.value("history", nlohmann::json::array())) {
    s.history.push_back({h.at("round").get<std::size_t>(), h.at("training_size").get<std::size_t>(),
                         h.at("accuracy").get<double>(), ModelId{h.at("model").get<std::string>()},
                         SnapshotId{h.value("training_data", "")}});
  }
  s.created_ms = j.value("created_ms", std::int64_t{0});
  s.updated_ms = j.value("updated_ms", std::int64_t{0});
  return s;
}

nlohmann::json StageAction::to_json() const {
  return {
      {"project_id", project_id},
      {"stage", to_string(stage)},
      {"available", available},
      {"in_progress", in_progress},
      {"retry", retry},
      {"task_id", task_id ? nlohmann::json(*task_id) : nlohmann::json()},
      {"description", description},
      {"spec", spec},
  };
}

}  // namespace iterforge
