#include "iterforge/service/platform.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/file.h>
#include <unistd.h>

#include <thread>

#include "iterforge/assets/dataset_ops.hpp"
#include "iterforge/assets/importers.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/time.hpp"
#include "iterforge/executor/instance.hpp"
#include "iterforge/executor/workspace.hpp"
#include "iterforge/labeling/http_backend.hpp"
#include "iterforge/progress/status_store.hpp"
#include "iterforge/scheduler/task_repository.hpp"

namespace iterforge {

namespace fs = std::filesystem;

StoreLock::StoreLock(const fs::path& store_root) {
  fs::create_directories(store_root);
  fs::path file = store_root / "LOCK";
  fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kUnavailable, "store " + store_root.string() +
                                             " is locked by another process");
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  if (::ftruncate(fd_, 0) == 0) {
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
}

StoreLock::~StoreLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

namespace {

ExecutorKind executor_kind_of(TaskKind kind) {
  switch (kind) {
    case TaskKind::kTrain:
      return ExecutorKind::kTrain;
    case TaskKind::kMine:
      return ExecutorKind::kMine;
    case TaskKind::kInfer:
      return ExecutorKind::kInfer;
    default:
      throw Error(ErrorCode::kInternal, "task kind " + std::string(to_string(kind)) +
                                            " has no executor");
  }
}

std::string str_input(const nlohmann::json& inputs, const char* key) {
  if (!inputs.contains(key) || !inputs[key].is_string() || inputs[key].get<std::string>().empty()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("inputs.") + key + " is required");
  }
  return inputs[key].get<std::string>();
}

std::optional<std::string> opt_input(const nlohmann::json& inputs, const char* key) {
  if (!inputs.contains(key) || inputs[key].is_null()) return std::nullopt;
  if (!inputs[key].is_string()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("inputs.") + key + " must be a string");
  }
  return inputs[key].get<std::string>();
}

std::vector<std::string> string_list(const nlohmann::json& inputs, const char* key) {
  if (!inputs.contains(key) || inputs[key].is_null()) return {};
  try {
    return inputs[key].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::kInvalidArgument, std::string("inputs.") + key + " must be a string list");
  }
}

}  // namespace

class PlatformRunner : public TaskRunner {
 public:
  explicit PlatformRunner(Platform& p) : p_(p) {}

  void validate(const TaskSpec& spec) override {
    const auto& in = spec.inputs;
    if (!in.is_object()) throw Error(ErrorCode::kInvalidArgument, "inputs must be an object");
    auto need_snapshot = [&](const std::string& id) {
      if (!p_.assets().has_snapshot(SnapshotId{id})) {
        throw Error(ErrorCode::kNotFound, "no snapshot " + id);
      }
    };
    auto need_model = [&](const std::string& id) {
      if (!p_.models().contains(ModelId{id})) throw Error(ErrorCode::kNotFound, "no model " + id);
    };
    switch (spec.kind) {
      case TaskKind::kImport: {
        fs::path dir = str_input(in, "dir");
        if (!fs::is_directory(dir)) {
          throw Error(ErrorCode::kInvalidArgument, "import dir " + dir.string() + " is not a directory");
        }
        parse_import_format(in.value("format", "flat-unlabeled"));
        parse_unknown_label_policy(in.value("policy", "ignore"));
        break;
      }
      case TaskKind::kDatasetOp: {
        std::string op = str_input(in, "op");
        if (op == "filter") {
          need_snapshot(str_input(in, "snapshot"));
        } else if (op == "merge" || op == "intersect" || op == "exclude") {
          need_snapshot(str_input(in, "a"));
          need_snapshot(str_input(in, "b"));
        } else {
          throw Error(ErrorCode::kInvalidArgument, "unknown dataset op " + op);
        }
        break;
      }
      case TaskKind::kLabel:
        need_snapshot(str_input(in, "dataset"));
        if (auto m = opt_input(in, "pre_annotation_model")) need_model(*m);
        break;
      case TaskKind::kTrain:
        need_snapshot(str_input(in, "train"));
        need_snapshot(str_input(in, "validation"));
        if (auto m = opt_input(in, "model")) need_model(*m);
        p_.executors().resolve(ExecutorKind::kTrain, opt_input(in, "executor").value_or(""));
        break;
      case TaskKind::kMine:
        need_snapshot(str_input(in, "candidates"));
        need_model(str_input(in, "model"));
        p_.executors().resolve(ExecutorKind::kMine, opt_input(in, "executor").value_or(""));
        break;
      case TaskKind::kInfer:
        need_snapshot(str_input(in, "dataset"));
        need_model(str_input(in, "model"));
        p_.executors().resolve(ExecutorKind::kInfer, opt_input(in, "executor").value_or(""));
        break;
    }
  }

  SubtaskResult execute(SubtaskKind kind, const TaskRecord& task, std::span<const int> gpus,
                        std::stop_token stop) override {
    try {
      switch (kind) {
        case SubtaskKind::kPrepareData:
          return task.kind == TaskKind::kImport ? run_import(task) : prepare(task);
        case SubtaskKind::kDatasetOp: {
          SnapshotId out = run_dataset_op(p_.assets(), task.inputs, "task " + task.task_id);
          return {SubtaskStatus::kOk, "", {{"snapshot", out.value}}};
        }
        case SubtaskKind::kRunExecutor:
          return run_executor(task, gpus, stop);
        case SubtaskKind::kCollectResults:
          return collect(task);
        case SubtaskKind::kLabelSync:
          return label_sync(task, stop);
        default:
          return {SubtaskStatus::kFailed, "unexpected subtask " + std::string(to_string(kind)), {}};
      }
    } catch (const std::exception& e) {
      return {SubtaskStatus::kFailed, e.what(), {}};
    }
  }

  void on_terminal(const TaskRecord& task) override {
    if (task.state == TaskState::kDone) {
      std::error_code ec;
      fs::remove_all(p_.workspace_dir(task.task_id), ec);
    }
  }

  void on_orphaned(const TaskRecord& task) override {
    fs::path ws = p_.workspace_dir(task.task_id);
    fs::path pid_file = ws / "executor.pid";
    if (!fs::exists(pid_file)) return;
    pid_t pid = 0;
    try {
      pid = std::stoi(read_file(pid_file));
    } catch (const std::exception&) {
      return;
    }
    if (pid <= 0) return;
    std::error_code ec;
    fs::path cwd = fs::read_symlink("/proc/" + std::to_string(pid) + "/cwd", ec);
    if (ec || fs::weakly_canonical(cwd, ec) != fs::weakly_canonical(ws, ec)) return;
    ::kill(-pid, SIGKILL);
  }

 private:
  SubtaskResult run_import(const TaskRecord& task) {
    ImportOptions o;
    o.source = task.inputs.at("dir").get<std::string>();
    o.format = parse_import_format(task.inputs.value("format", "flat-unlabeled"));
    o.policy = parse_unknown_label_policy(task.inputs.value("policy", "ignore"));
    o.class_names = string_list(task.inputs, "class_names");
    o.provenance = "import task " + task.task_id;
    ImportReport r = import_dataset(p_.assets(), o);
    return {SubtaskStatus::kOk,
            "",
            {{"snapshot", r.snapshot.value},
             {"import",
              {{"files", r.files},
               {"assets", r.assets},
               {"duplicate_files", r.duplicate_files},
               {"new_blobs", r.new_blobs},
               {"objects", r.objects},
               {"unknown_labels", r.unknown_labels},
               {"malformed_files", r.malformed_files},
               {"class_names", r.class_names},
               {"warnings", r.warnings}}}}};
  }

  Workspace workspace_of(const TaskRecord& task) {
    return Workspace{p_.workspace_dir(task.task_id), executor_kind_of(task.kind), task.task_id};
  }

  SubtaskResult prepare(const TaskRecord& task) {
    ExecutorKind ek = executor_kind_of(task.kind);
    const auto& in = task.inputs;
    ExecutorManifest m = p_.executors().resolve(ek, opt_input(in, "executor").value_or(""));
    WorkspaceRequest req;
    req.task_id = task.task_id;
    req.kind = ek;
    req.params = m.resolve_params(in.value("params", nlohmann::json::object()));
    if (auto model = opt_input(in, "model")) req.model = ModelId{*model};
    switch (ek) {
      case ExecutorKind::kTrain:
        req.train = SnapshotId{str_input(in, "train")};
        req.validation = SnapshotId{str_input(in, "validation")};
        break;
      case ExecutorKind::kMine:
        req.candidates = SnapshotId{str_input(in, "candidates")};
        break;
      case ExecutorKind::kInfer:
        req.candidates = SnapshotId{str_input(in, "dataset")};
        break;
    }
    req.class_names = string_list(in, "class_names");
    fs::path root = p_.workspace_dir(task.task_id);
    std::error_code ec;
    fs::remove_all(root, ec);
    prepare_workspace(p_.assets(), p_.models(), root, req);
    return {SubtaskStatus::kOk, "", {{"executor", m.key()}, {"workspace", root.string()}}};
  }

  SubtaskResult run_executor(const TaskRecord& task, std::span<const int> gpus,
                             std::stop_token stop) {
    Workspace ws = workspace_of(task);
    ExecutorManifest m =
        p_.executors().resolve(ws.kind, task.outputs.at("executor").get<std::string>());
    write_launch_config(ws, gpus);
    InstanceOptions opts;
    opts.archive_root = p_.config().store_root / "archive";
    opts.log_root = p_.config().store_root / "logs";
    opts.stop_grace = std::chrono::seconds(p_.config().stop_grace_seconds);
    auto instance = ExecutorInstance::launch(m, ws, gpus, opts);
    if (instance->spawned()) {
      write_file_atomic(ws.root / "executor.pid", std::to_string(instance->pid()));
    }
    p_.bus().poller().watch(task.user_id, task.task_id, ws.monitor_file());
    TaskOutcome outcome;
    for (;;) {
      if (stop.stop_requested()) {
        outcome = instance->stop();
        break;
      }
      if (auto exit = instance->poll()) {
        outcome = instance->finalize(*exit);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    p_.bus().poll_once();
    p_.bus().poller().unwatch(task.task_id);
    nlohmann::json out = {{"exit_detail", outcome.exit_detail}};
    if (outcome.archived_intermediates) out["archived"] = outcome.archived_intermediates->string();
    if (outcome.stored_log) out["log"] = outcome.stored_log->string();
    switch (outcome.status) {
      case OutcomeStatus::kSuccess:
        return {SubtaskStatus::kOk, "", out};
      case OutcomeStatus::kBroken:
        return {SubtaskStatus::kStopped, outcome.exit_detail, out};
      case OutcomeStatus::kFailure:
        break;
    }
    return {SubtaskStatus::kFailed, outcome.exit_detail, out};
  }

  SubtaskResult collect(const TaskRecord& task) {
    Workspace ws = workspace_of(task);
    TaskOutcome outcome;
    if (auto problem = collect_outputs(ws, outcome)) return {SubtaskStatus::kFailed, *problem, {}};
    fs::path results = p_.results_dir(task.task_id);
    switch (ws.kind) {
      case ExecutorKind::kTrain: {
        ModelId id = p_.models().register_model(ws.out() / "models", task.task_id,
                                                task.outputs.value("executor", ""),
                                                outcome.accuracy,
                                                task.inputs.value("train", ""));
        return {SubtaskStatus::kOk, "", {{"model", id.value}, {"accuracy", *outcome.accuracy}}};
      }
      case ExecutorKind::kMine: {
        fs::create_directories(results);
        fs::path file = results / "result.tsv";
        fs::copy_file(ws.out() / "result.tsv", file, fs::copy_options::overwrite_existing);
        return {SubtaskStatus::kOk, "", {{"result_file", file.string()}}};
      }
      case ExecutorKind::kInfer: {
        fs::path dir = results / "infer";
        copy_tree(ws.out() / "infer", dir);
        return {SubtaskStatus::kOk, "", {{"infer_dir", dir.string()}}};
      }
    }
    return {SubtaskStatus::kFailed, "unknown executor kind", {}};
  }

  SubtaskResult label_sync(const TaskRecord& task, std::stop_token stop) {
    const auto& in = task.inputs;
    LabelingGateway& gw = p_.labels();
    std::string id = opt_input(in, "label_task_id").value_or("");
    if (id.empty() || !gw.contains(id)) {
      LabelTaskRequest req;
      req.dataset = SnapshotId{str_input(in, "dataset")};
      req.classes = string_list(in, "classes");
      if (req.classes.empty()) req.classes = p_.assets().snapshot(req.dataset)->class_names();
      req.instructions = in.value("instructions", "");
      req.doc_url = opt_input(in, "doc_url");
      if (auto m = opt_input(in, "pre_annotation_model")) req.pre_annotation_model = ModelId{*m};
      req.user_id = task.user_id;
      id = gw.create(req, id).label_task_id;
    }
    auto policy = parse_unknown_label_policy(in.value("unknown_label_policy", "ignore"));
    double last_progress = -1.0;
    auto wait = std::chrono::milliseconds(p_.config().label_poll_ms);
    for (;;) {
      if (stop.stop_requested()) return {SubtaskStatus::kStopped, "stopped by user", {{"label_task_id", id}}};
      LabelTaskRecord rec = gw.poll(id);
      if (rec.state == LabelState::kFailed) {
        if (!rec.retryable) return {SubtaskStatus::kFailed, rec.error, {{"label_task_id", id}}};
        rec = gw.retry(id);
      }
      if (rec.progress != last_progress) {
        last_progress = rec.progress;
        ProgressEvent e;
        e.user_id = task.user_id;
        e.task_id = task.task_id;
        e.progress = rec.progress;
        e.state_code = static_cast<int>(StateCode::kRunning);
        e.state_message = "labeling";
        e.timestamp_ms = now_ms();
        p_.bus().publish(e);
      }
      if (rec.state == LabelState::kCompleted) {
        SnapshotId snap = gw.collect(id, policy);
        return {SubtaskStatus::kOk, "", {{"snapshot", snap.value}, {"label_task_id", id}}};
      }
      std::mutex m;
      std::condition_variable_any cv;
      std::unique_lock lock(m);
      cv.wait_for(lock, stop, wait, [] { return false; });
    }
  }

  Platform& p_;
};

Platform::Platform(ServiceConfig config, OpenOptions options) : config_(std::move(config)) {
  config_.validate();
  const fs::path& root = config_.store_root;
  lock_ = std::make_unique<StoreLock>(root);
  for (const char* dir : {"assets", "models", "labels", "audit", "results", "workspaces",
                          "archive", "logs"}) {
    fs::create_directories(root / dir);
  }
  db_ = std::make_shared<Database>(root / "platform.db");
  assets_ = std::make_unique<AssetStore>(AssetStoreOptions{root / "assets"});
  models_ = std::make_unique<ModelStore>(root / "models");
  executors_ = std::make_unique<ExecutorRegistry>(root / "executors.json");

  hub_ = std::make_shared<PushHub>();
  status_ = std::make_shared<SqliteStatusStore>(db_);
  ProgressBusOptions bus_options;
  bus_options.poll_interval = std::chrono::milliseconds(config_.poll_interval_ms);
  bus_options.dispatch_interval = std::chrono::milliseconds(config_.dispatch_interval_ms);
  bus_ = std::make_unique<ProgressBus>(bus_options,
                                       std::make_shared<StreamQueue>(root / "progress.queue"),
                                       status_, hub_);

  std::shared_ptr<LabelBackend> backend;
  if (config_.labeler_backend == "sim") {
    AssetStore* assets = assets_.get();
    sim_ = std::make_shared<SimLabeler>(
        [assets](const std::string& hex) { return assets->read_asset(AssetId::from_hex(hex)); },
        linear_ground_truth(config_.sim_labeler.weights, config_.sim_labeler.bias),
        config_.sim_labeler.rate);
    backend = sim_;
  } else {
    backend = std::make_shared<HttpLabelBackend>(config_.labeler_backend);
  }
  labels_ = std::make_unique<LabelingGateway>(
      *assets_, backend, root / "labels",
      [this](const SnapshotId& dataset, const ModelId& model) {
        return pre_annotate(dataset, model, "u1");
      });

  SchedulerOptions sched;
  sched.gpu_pool_capacity = config_.gpu_pool_capacity;
  scheduler_ = std::make_unique<Scheduler>(sched, std::make_shared<PlatformRunner>(*this),
                                           std::make_shared<SqliteTaskRepository>(db_));
  ProgressBus* bus = bus_.get();
  scheduler_->add_listener(
      [bus](const TaskRecord& r) { bus->publish(event_from_task(r, now_ms())); });
  engine_ = std::make_unique<IterationEngine>(*scheduler_, *assets_, *models_,
                                              std::make_shared<ProjectRepository>(db_),
                                              root / "audit");
  scheduler_->start(options.recover);
  engine_->start();
  if (options.start_background) bus_->start();
}

std::unique_ptr<Platform> Platform::open(ServiceConfig config, OpenOptions options) {
  return std::unique_ptr<Platform>(new Platform(std::move(config), options));
}

Platform::~Platform() {
  try {
    shutdown();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "platform shutdown: %s\n", e.what());
  }
}

void Platform::shutdown() {
  if (shut_down_) return;
  shut_down_ = true;
  engine_->stop();
  scheduler_->shutdown(config_.drain);
  bus_->stop();
  hub_->close_all();
}

ProgressEvent Platform::task_status(const std::string& task_id) const {
  if (auto stored = status_->get(task_id)) return *stored;
  auto task = scheduler_->get(task_id);
  if (!task) throw Error(ErrorCode::kNotFound, "no task " + task_id);
  return event_from_task(*task, task->created_ms);
}

fs::path Platform::workspace_dir(const std::string& task_id) const {
  return config_.store_root / "workspaces" / task_id;
}

fs::path Platform::results_dir(const std::string& task_id) const {
  return config_.store_root / "results" / task_id;
}

std::map<std::string, Annotations> Platform::pre_annotate(const SnapshotId& dataset,
                                                          const ModelId& model,
                                                          const std::string& user_id) {
  TaskSpec spec;
  spec.user_id = user_id;
  spec.kind = TaskKind::kInfer;
  spec.inputs = {{"dataset", dataset.value}, {"model", model.value}};
  std::string id = scheduler_->submit(spec);
  auto done = scheduler_->wait(id, std::chrono::hours(1));
  if (!done || done->state != TaskState::kDone) {
    throw Error(ErrorCode::kUnavailable,
                "pre-annotation inference " + id + " did not finish" +
                    (done ? ": " + done->error_message : std::string()));
  }
  std::map<std::string, Annotations> out;
  fs::path dir = done->outputs.at("infer_dir").get<std::string>();
  for (const auto& de : fs::directory_iterator(dir)) {
    if (de.path().extension() != ".ann") continue;
    out[de.path().stem().string()] = parse_annotations(read_file(de.path()));
  }
  return out;
}

}  // namespace iterforge
