#include "iterforge/iteration/engine.hpp"

#include <unordered_set>

#include "iterforge/assets/dataset_ops.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/time.hpp"
#include "iterforge/executor/instance.hpp"

namespace iterforge {

namespace fs = std::filesystem;

ProjectRepository::ProjectRepository(std::shared_ptr<Database> db) : db_(std::move(db)) {
  db_->exec(
      "CREATE TABLE IF NOT EXISTS projects ("
      " project_id TEXT PRIMARY KEY,"
      " body TEXT NOT NULL)");
}

void ProjectRepository::save(const IterationState& state) {
  db_->query("INSERT INTO projects(project_id, body) VALUES(?1, ?2) "
             "ON CONFLICT(project_id) DO UPDATE SET body=excluded.body",
             {state.project_id, state.to_json().dump()});
}

std::vector<IterationState> ProjectRepository::list() const {
  std::vector<IterationState> out;
  db_->query("SELECT body FROM projects ORDER BY project_id", {}, [&](const Database::Row& row) {
    out.push_back(IterationState::from_json(nlohmann::json::parse(*row[0])));
  });
  return out;
}

AuditLog::AuditLog(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void AuditLog::append(const std::string& project_id, const nlohmann::json& record) {
  std::lock_guard lock(mu_);
  std::string line = record.dump() + "\n";
  std::FILE* f = std::fopen((dir_ / (project_id + ".jsonl")).c_str(), "ab");
  if (!f) throw Error(ErrorCode::kIo, "cannot open audit log for " + project_id);
  bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size();
  ok = std::fclose(f) == 0 && ok;
  if (!ok) throw Error(ErrorCode::kIo, "audit append failed for " + project_id);
}

std::vector<nlohmann::json> AuditLog::read(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  std::vector<nlohmann::json> out;
  fs::path file = dir_ / (project_id + ".jsonl");
  if (!fs::exists(file)) return out;
  std::string text = read_file(file);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    out.push_back(nlohmann::json::parse(text.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return out;
}

IterationEngine::IterationEngine(Scheduler& scheduler, AssetStore& assets, ModelStore& models,
                                 std::shared_ptr<ProjectRepository> repository,
                                 fs::path audit_dir)
    : scheduler_(scheduler),
      assets_(assets),
      models_(models),
      repository_(std::move(repository)),
      audit_(std::move(audit_dir)) {
  for (auto& s : repository_->list()) {
    ids_.observe(s.project_id);
    projects_[s.project_id] = std::move(s);
  }
  scheduler_.add_listener([this](const TaskRecord& r) {
    if (is_terminal(r.state)) on_task(r);
  });
  worker_ = std::jthread([this](std::stop_token st) { worker_loop(st); });
}

IterationEngine::~IterationEngine() { stop(); }

void IterationEngine::start() {
  std::vector<TaskRecord> finished;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, s] : projects_) {
      if (!s.stage_task_id) continue;
      auto task = scheduler_.get(*s.stage_task_id);
      if (!task) {
        IterStage from = s.stage;
        s.stage_failed = true;
        s.stage_error = "stage task " + *s.stage_task_id + " is missing";
        s.stage_task_id.reset();
        audit_locked(s, "failed", from);
        persist_locked(s);
      } else if (is_terminal(task->state)) {
        finished.push_back(*task);
      }
    }
  }
  for (auto& t : finished) on_task(t);
}

void IterationEngine::stop() {
  if (!worker_.joinable()) return;
  worker_.request_stop();
  queue_cv_.notify_all();
  worker_.join();
}

void IterationEngine::on_task(const TaskRecord& task) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(task);
  }
  queue_cv_.notify_one();
}

void IterationEngine::worker_loop(std::stop_token stop) {
  for (;;) {
    TaskRecord task;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, stop, [&] { return !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      handle_terminal(task);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "iteration engine: %s\n", e.what());
    }
  }
}

IterationState& IterationEngine::state_locked(const std::string& project_id) {
  auto it = projects_.find(project_id);
  if (it == projects_.end()) throw Error(ErrorCode::kNotFound, "no project " + project_id);
  return it->second;
}

void IterationEngine::persist_locked(IterationState& state) {
  state.updated_ms = now_ms();
  repository_->save(state);
  changed_.notify_all();
}

void IterationEngine::audit_locked(const IterationState& state, const std::string& event,
                                   IterStage from, nlohmann::json extra) {
  auto id_or_null = [](const auto& opt) {
    return opt ? nlohmann::json(opt->value) : nlohmann::json();
  };
  std::size_t training_size = 0;
  if (state.training_data && assets_.has_snapshot(*state.training_data)) {
    training_size = assets_.snapshot(*state.training_data)->size();
  }
  nlohmann::json record = {
      {"timestamp_ms", now_ms()},
      {"project_id", state.project_id},
      {"event", event},
      {"round", state.round},
      {"from_stage", to_string(from)},
      {"to_stage", to_string(state.stage)},
      {"task_id", state.stage_task_id ? nlohmann::json(*state.stage_task_id) : nlohmann::json()},
      {"training_data", id_or_null(state.training_data)},
      {"training_size", training_size},
      {"mined_batch", id_or_null(state.mined_batch)},
      {"labeled_batch", id_or_null(state.labeled_batch)},
      {"current_model", id_or_null(state.current_model)},
      {"current_accuracy", state.current_accuracy},
      {"output_model", id_or_null(state.output_model)},
  };
  for (auto& [k, v] : extra.items()) record[k] = v;
  audit_.append(state.project_id, record);
}

std::string IterationEngine::create_project(ProjectConfig config) {
  if (!(config.target_accuracy > 0.0 && config.target_accuracy <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target_accuracy must be in (0, 1]");
  }
  if (config.mining_batch_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "mining_batch_size must be positive");
  }
  if (config.class_names.empty()) throw Error(ErrorCode::kInvalidArgument, "class_names is empty");
  if (config.gpu_count < 1) throw Error(ErrorCode::kInvalidArgument, "gpu_count must be >= 1");
  SnapshotPtr superset = assets_.snapshot(config.data_superset);
  if (superset->empty()) throw Error(ErrorCode::kInvalidArgument, "data_superset is empty");
  assets_.snapshot(config.validation);
  SnapshotPtr initial;
  if (config.initial_data) {
    initial = assets_.snapshot(*config.initial_data);
    for (const auto& id : initial->index().ids()) {
      if (!superset->contains(id)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "initial_data is not a subset of data_superset (" + id.hex() + ")");
      }
    }
    if (initial->empty()) {
      config.initial_data.reset();
      initial.reset();
    }
  }
  if (config.initial_model && !models_.contains(*config.initial_model)) {
    throw Error(ErrorCode::kNotFound, "no model " + config.initial_model->value);
  }
  if (!initial && !config.initial_model) {
    throw Error(ErrorCode::kInvalidArgument,
                "a project needs initial data or an initial model to mine with");
  }

  IterationState s;
  s.config = std::move(config);
  s.created_ms = now_ms();
  s.training_data = s.config.initial_data;
  s.current_model = s.config.initial_model;
  if (initial) {
    s.stage = initial->labeled_count() == initial->size() ? IterStage::kTrain : IterStage::kLabel;
  } else {
    s.stage = IterStage::kMine;
  }
  std::lock_guard lock(mu_);
  s.project_id = ids_.next();
  projects_[s.project_id] = s;
  IterationState& stored = projects_[s.project_id];
  persist_locked(stored);
  audit_locked(stored, "created", stored.stage);
  return stored.project_id;
}

IterationState IterationEngine::get(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) throw Error(ErrorCode::kNotFound, "no project " + project_id);
  return it->second;
}

std::vector<IterationState> IterationEngine::list() const {
  std::lock_guard lock(mu_);
  std::vector<IterationState> out;
  for (const auto& [id, s] : projects_) out.push_back(s);
  return out;
}

std::vector<nlohmann::json> IterationEngine::audit(const std::string& project_id) const {
  get(project_id);
  return audit_.read(project_id);
}

std::optional<IterationState> IterationEngine::wait_until(
    const std::string& project_id, const std::function<bool(const IterationState&)>& pred,
    std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) throw Error(ErrorCode::kNotFound, "no project " + project_id);
  bool ok = changed_.wait_for(lock, timeout, [&] { return pred(projects_.at(project_id)); });
  if (!ok) return std::nullopt;
  return projects_.at(project_id);
}

StageAction IterationEngine::next_action(const std::string& project_id) const {
  std::lock_guard lock(mu_);
  auto it = projects_.find(project_id);
  if (it == projects_.end()) throw Error(ErrorCode::kNotFound, "no project " + project_id);
  return action_locked(it->second);
}

StageAction IterationEngine::action_locked(const IterationState& s) const {
  StageAction a;
  a.project_id = s.project_id;
  a.stage = s.stage;
  if (s.stage == IterStage::kFinished) {
    a.description = s.interrupted ? "finished by user interrupt" : "target accuracy reached";
    return a;
  }
  if (s.stage == IterStage::kExhausted) {
    a.description = "no unlabeled candidates left";
    return a;
  }
  if (s.stage_task_id) {
    a.in_progress = true;
    a.task_id = s.stage_task_id;
    a.description = std::string(to_string(s.stage)) + " running as " + *s.stage_task_id;
    return a;
  }
  a.available = true;
  a.retry = s.stage_failed;
  const auto& c = s.config;
  auto model_json = s.current_model ? nlohmann::json(s.current_model->value) : nlohmann::json();
  switch (s.stage) {
    case IterStage::kMine:
      a.description = "mine " + std::to_string(c.mining_batch_size) + " from " +
                      c.data_superset.value +
                      (s.training_data ? " minus " + s.training_data->value : std::string()) +
                      " with " + (s.current_model ? s.current_model->value : std::string("-"));
      a.spec = {{"kind", "mine"},
                {"gpu_count", c.gpu_count},
                {"inputs",
                 {{"superset", c.data_superset.value},
                  {"exclude", s.training_data ? nlohmann::json(s.training_data->value) : nlohmann::json()},
                  {"model", model_json},
                  {"executor", c.mine_executor},
                  {"params", c.mine_params},
                  {"batch", c.mining_batch_size}}}};
      break;
    case IterStage::kLabel: {
      const SnapshotId& target = s.mined_batch ? *s.mined_batch : *s.training_data;
      a.description = "label " + target.value;
      a.spec = {{"kind", "label"},
                {"inputs", {{"dataset", target.value}, {"classes", c.class_names}}}};
      break;
    }
    case IterStage::kUpdateData:
      if (s.training_data) {
        a.description = "merge " + s.labeled_batch->value + " into " + s.training_data->value;
        a.spec = {{"kind", "dataset-op"},
                  {"inputs",
                   {{"op", "merge"},
                    {"a", s.training_data->value},
                    {"b", s.labeled_batch->value},
                    {"strategy", "prefer-right"}}}};
      } else {
        a.description = "use " + s.labeled_batch->value + " as training data";
      }
      break;
    case IterStage::kTrain:
      a.description = "train on " + s.training_data->value + ", validate on " + c.validation.value;
      a.spec = {{"kind", "train"},
                {"gpu_count", c.gpu_count},
                {"inputs",
                 {{"train", s.training_data->value},
                  {"validation", c.validation.value},
                  {"model", model_json},
                  {"executor", c.train_executor},
                  {"params", c.train_params}}}};
      break;
    case IterStage::kEvaluate:
      a.description = "evaluate " + (s.trained_model ? s.trained_model->value : std::string("-")) +
                      " against target " + std::to_string(c.target_accuracy);
      break;
    default:
      break;
  }
  return a;
}

IterationState IterationEngine::advance(const std::string& project_id) {
  std::lock_guard lock(mu_);
  IterationState& s = state_locked(project_id);
  if (is_final(s.stage)) {
    throw Error(ErrorCode::kFailedPrecondition, "project " + project_id + " is " +
                                                    std::string(to_string(s.stage)));
  }
  if (s.stage_task_id) {
    throw Error(ErrorCode::kFailedPrecondition, "stage " + std::string(to_string(s.stage)) +
                                                    " is still running as " + *s.stage_task_id);
  }
  bool more = step_locked(s);
  if (s.config.auto_advance && more) drive_locked(s);
  return s;
}

void IterationEngine::drive_locked(IterationState& s) {
  try {
    while (step_locked(s)) {
    }
  } catch (const std::exception& e) {
    s.stage_failed = true;
    s.stage_error = e.what();
    audit_locked(s, "failed", s.stage, {{"error", e.what()}});
    persist_locked(s);
  }
}

bool IterationEngine::step_locked(IterationState& s) {
  if (is_final(s.stage) || s.stage_task_id) return false;
  IterStage from = s.stage;
  StageAction action = action_locked(s);
  TaskSpec spec;
  spec.user_id = s.config.user_id;
  nlohmann::json inputs = action.spec.value("inputs", nlohmann::json::object());
  inputs["project_id"] = s.project_id;

  switch (s.stage) {
    case IterStage::kEvaluate:
      evaluate_locked(s);
      return !is_final(s.stage);
    case IterStage::kUpdateData:
      if (!s.training_data) {
        s.training_data = s.labeled_batch;
        s.stage = IterStage::kTrain;
        s.stage_failed = false;
        audit_locked(s, "completed", from);
        persist_locked(s);
        return true;
      }
      spec.kind = TaskKind::kDatasetOp;
      break;
    case IterStage::kMine: {
      if (!s.current_model) {
        throw Error(ErrorCode::kFailedPrecondition, "mining needs a model");
      }
      SnapshotId candidates =
          s.training_data ? exclude(assets_, s.config.data_superset, *s.training_data,
                                    "project " + s.project_id + " candidates")
                          : s.config.data_superset;
      if (assets_.snapshot(candidates)->empty()) {
        s.stage = IterStage::kExhausted;
        s.output_model = s.current_model;
        audit_locked(s, "exhausted", from);
        persist_locked(s);
        return false;
      }
      s.candidates = candidates;
      inputs.erase("superset");
      inputs.erase("exclude");
      inputs.erase("batch");
      inputs["candidates"] = candidates.value;
      spec.kind = TaskKind::kMine;
      spec.gpu_count = s.config.gpu_count;
      break;
    }
    case IterStage::kLabel:
      inputs["instructions"] = "Assign each item its class.";
      spec.kind = TaskKind::kLabel;
      break;
    case IterStage::kTrain:
      spec.kind = TaskKind::kTrain;
      spec.gpu_count = s.config.gpu_count;
      break;
    default:
      return false;
  }
  if (inputs.contains("model") && inputs["model"].is_null()) inputs.erase("model");
  spec.inputs = std::move(inputs);
  std::string task_id = scheduler_.submit(std::move(spec));
  s.stage_task_id = task_id;
  s.stage_failed = false;
  s.stage_error.clear();
  audit_locked(s, "submitted", from);
  persist_locked(s);
  return false;
}

void IterationEngine::evaluate_locked(IterationState& s) {
  if (!s.trained_model) throw Error(ErrorCode::kFailedPrecondition, "nothing to evaluate");
  IterStage from = s.stage;
  ModelRecord model = models_.get(*s.trained_model);
  double accuracy = model.accuracy.value_or(0.0);
  s.current_model = s.trained_model;
  s.current_accuracy = accuracy;
  s.trained_model.reset();
  s.round += 1;
  s.output_model = s.current_model;
  SnapshotPtr training = assets_.snapshot(*s.training_data);
  s.history.push_back({s.round, training->size(), accuracy, *s.current_model, *s.training_data});
  s.stage_failed = false;
  s.stage_error.clear();
  if (accuracy > s.config.target_accuracy) {
    s.stage = IterStage::kFinished;
    audit_locked(s, "finished", from, {{"accuracy", accuracy}});
  } else {
    SnapshotPtr superset = assets_.snapshot(s.config.data_superset);
    bool remaining = false;
    for (const auto& id : superset->index().ids()) {
      if (!training->contains(id)) {
        remaining = true;
        break;
      }
    }
    s.mined_batch.reset();
    s.labeled_batch.reset();
    s.candidates.reset();
    s.stage = remaining ? IterStage::kMine : IterStage::kExhausted;
    audit_locked(s, remaining ? "evaluated" : "exhausted", from, {{"accuracy", accuracy}});
  }
  persist_locked(s);
}

SnapshotId IterationEngine::select_mined_locked(const IterationState& s, const TaskRecord& task) {
  if (!task.outputs.contains("result_file")) {
    throw Error(ErrorCode::kIntegrity, "mine task " + task.task_id + " has no result file");
  }
  auto ranking = read_mining_result(task.outputs["result_file"].get<std::string>());
  SnapshotPtr candidates = assets_.snapshot(*s.candidates);
  SnapshotPtr training = s.training_data ? assets_.snapshot(*s.training_data) : nullptr;
  std::vector<AssetId> picked;
  std::unordered_set<AssetId> seen;
  for (const auto& [hex, score] : ranking) {
    if (picked.size() >= s.config.mining_batch_size) break;
    AssetId id = AssetId::from_hex(hex);
    if (!candidates->contains(id) || (training && training->contains(id))) continue;
    if (!seen.insert(id).second) continue;
    picked.push_back(id);
  }
  return select(assets_, *s.candidates, picked, task.task_id);
}

void IterationEngine::apply_result_locked(IterationState& s, const TaskRecord& task) {
  IterStage from = s.stage;
  const auto& out = task.outputs;
  switch (s.stage) {
    case IterStage::kLabel: {
      SnapshotId labeled{out.at("snapshot").get<std::string>()};
      if (s.mined_batch) {
        s.labeled_batch = labeled;
        s.stage = IterStage::kUpdateData;
      } else {
        s.training_data = labeled;
        s.stage = IterStage::kTrain;
      }
      break;
    }
    case IterStage::kUpdateData:
      s.training_data = SnapshotId{out.at("snapshot").get<std::string>()};
      s.stage = IterStage::kTrain;
      break;
    case IterStage::kTrain:
      s.trained_model = ModelId{out.at("model").get<std::string>()};
      s.stage = IterStage::kEvaluate;
      break;
    case IterStage::kMine: {
      SnapshotId mined = select_mined_locked(s, task);
      s.mined_batch = mined;
      s.labeled_batch.reset();
      if (assets_.snapshot(mined)->empty()) {
        s.stage = IterStage::kExhausted;
        s.output_model = s.current_model;
      } else {
        s.stage = IterStage::kLabel;
      }
      break;
    }
    default:
      return;
  }
  audit_locked(s, "completed", from);
  s.stage_task_id.reset();
  persist_locked(s);
}

void IterationEngine::handle_terminal(const TaskRecord& task) {
  std::lock_guard lock(mu_);
  IterationState* match = nullptr;
  for (auto& [id, s] : projects_) {
    if (s.stage_task_id == task.task_id) match = &s;
  }
  if (!match) return;
  IterationState& s = *match;
  if (is_final(s.stage)) {
    s.stage_task_id.reset();
    persist_locked(s);
    return;
  }
  IterStage from = s.stage;
  if (task.state == TaskState::kDone) {
    try {
      apply_result_locked(s, task);
    } catch (const std::exception& e) {
      s.stage_failed = true;
      s.stage_error = e.what();
      audit_locked(s, "failed", from, {{"error", e.what()}});
      s.stage_task_id.reset();
      persist_locked(s);
      return;
    }
    if (s.config.auto_advance) drive_locked(s);
    return;
  }
  s.stage_failed = true;
  s.stage_error = std::string(to_string(task.state)) + ": " + task.error_message;
  audit_locked(s, "failed", from, {{"error", s.stage_error}});
  s.stage_task_id.reset();
  persist_locked(s);
}

IterationState IterationEngine::interrupt(const std::string& project_id) {
  std::lock_guard lock(mu_);
  IterationState& s = state_locked(project_id);
  if (is_final(s.stage)) {
    throw Error(ErrorCode::kFailedPrecondition, "project " + project_id + " is already " +
                                                    std::string(to_string(s.stage)));
  }
  IterStage from = s.stage;
  if (s.stage_task_id) {
    try {
      scheduler_.stop_task(*s.stage_task_id);
    } catch (const Error&) {
    }
  }
  s.stage = IterStage::kFinished;
  s.interrupted = true;
  s.output_model = s.current_model;
  if (!s.current_model) s.warning = "interrupted before any model was trained; no output model";
  audit_locked(s, "interrupted", from);
  persist_locked(s);
  return s;
}

void IterationEngine::set_auto_advance(const std::string& project_id, bool enabled) {
  std::lock_guard lock(mu_);
  IterationState& s = state_locked(project_id);
  s.config.auto_advance = enabled;
  persist_locked(s);
}

}  // namespace iterforge
