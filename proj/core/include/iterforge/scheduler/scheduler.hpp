#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "iterforge/common/ids.hpp"
#include "iterforge/scheduler/gpu_pool.hpp"
#include "iterforge/scheduler/task.hpp"
#include "iterforge/scheduler/task_repository.hpp"

namespace iterforge {

enum class SubtaskStatus { kOk, kFailed, kStopped };

struct SubtaskResult {
  SubtaskStatus status = SubtaskStatus::kOk;
  std::string message;
  // Merged into TaskRecord::outputs.
  nlohmann::json outputs = nlohmann::json::object();
};

// Executes the work behind prepare-data, dataset-op, run-executor,
// collect-results and label-sync. GPU subtasks never reach the runner.
class TaskRunner {
 public:
  virtual ~TaskRunner() = default;

  // Throws Error when |spec| cannot run (missing snapshot, no executor...).
  virtual void validate(const TaskSpec& spec) { (void)spec; }

  // Called on a worker thread. |stop| fires when the user stops the task.
  virtual SubtaskResult execute(SubtaskKind kind, const TaskRecord& task,
                                std::span<const int> gpus, std::stop_token stop) = 0;

  // Called once the task is terminal.
  virtual void on_terminal(const TaskRecord& task) { (void)task; }

  // Called during start-up for a task that was in flight when the previous
  // process died, before it is marked broken.
  virtual void on_orphaned(const TaskRecord& task) { (void)task; }
};

struct SubtaskEvent {
  std::string task_id;
  SubtaskKind kind = SubtaskKind::kPrepareData;
  bool finished = false;  // false = started
  SubtaskStatus status = SubtaskStatus::kOk;
  std::int64_t steady_ns = 0;
};

enum class DrainPolicy { kBroken, kWait };
std::string_view to_string(DrainPolicy policy);
DrainPolicy parse_drain_policy(std::string_view text);

struct SchedulerOptions {
  int gpu_pool_capacity = 2;
  bool record_subtask_events = false;
};

using TaskListener = std::function<void(const TaskRecord&)>;

// Single scheduling authority. Every task-state and pool mutation runs on
// one internal thread fed by a command queue; subtask bodies run on
// per-task worker threads and report back through the same queue.
class Scheduler {
 public:
  Scheduler(SchedulerOptions options, std::shared_ptr<TaskRunner> runner,
            std::shared_ptr<TaskRepository> repository);
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  // Listeners observe every persisted change and run on the authority
  // thread, so they must not block. Register before start().
  void add_listener(TaskListener listener);

  // Loads persisted tasks. With |recover|, in-flight tasks are marked
  // broken and pending ones are scheduled again.
  void start(bool recover = true);
  void shutdown(DrainPolicy drain = DrainPolicy::kBroken);

  // Validates and persists the task as pending; returns immediately.
  std::string submit(TaskSpec spec);
  // Throws Error(kNotFound). Stopping a terminal task is a no-op.
  void stop_task(const std::string& task_id);

  std::optional<TaskRecord> get(const std::string& task_id) const;
  std::vector<TaskRecord> list() const;
  // Returns the record once terminal, or nullopt on timeout.
  std::optional<TaskRecord> wait(const std::string& task_id,
                                 std::chrono::milliseconds timeout) const;
  // True once no task is pending or active.
  bool wait_idle(std::chrono::milliseconds timeout) const;

  int capacity() const { return pool_.capacity(); }
  PoolSnapshot pool() const { return pool_.snapshot(); }
  void set_pool_observer(std::function<void(const PoolSnapshot&)> observer);
  std::vector<SubtaskEvent> subtask_events() const;

 private:
  enum class Step { kWaiting, kRunning, kDone, kFailed, kCancelled };

  struct Run {
    std::vector<AtomicSubtask> plan;
    std::vector<Step> steps;
    bool stop_requested = false;
    bool failed = false;
    bool waiting_gpu = false;
    std::string error;
    std::stop_source stop;
    std::jthread worker;
  };

  void post(std::function<void()> command);
  void authority_loop(std::stop_token stop);

  void begin(const std::string& task_id);
  void pump(const std::string& task_id);
  void launch_worker(const std::string& task_id, Run& run, int index);
  void on_worker_done(const std::string& task_id, int index, SubtaskResult result);
  void on_gpu_granted(const std::string& task_id, const std::vector<int>& ids);
  void handle_stop(const std::string& task_id);
  void finish(const std::string& task_id, TaskState state, const std::string& error);

  // Applies |mutate| to the record, persists it and notifies listeners.
  void update(const std::string& task_id, const std::function<void(TaskRecord&)>& mutate);
  void transition(const std::string& task_id, TaskState to);
  void record_event(const std::string& task_id, SubtaskKind kind, bool finished,
                    SubtaskStatus status);

  SchedulerOptions options_;
  std::shared_ptr<TaskRunner> runner_;
  std::shared_ptr<TaskRepository> repository_;
  GpuPool pool_;
  IdSequence ids_{"t"};
  std::vector<TaskListener> listeners_;

  mutable std::shared_mutex records_mu_;
  std::map<std::string, TaskRecord> records_;
  mutable std::condition_variable_any records_cv_;
  std::size_t active_ = 0;

  // Authority-only state.
  std::map<std::string, Run> runs_;

  std::mutex queue_mu_;
  std::condition_variable_any queue_cv_;
  std::deque<std::function<void()>> queue_;
  bool accepting_ = false;
  std::jthread authority_;

  mutable std::mutex events_mu_;
  std::vector<SubtaskEvent> events_;
};

}  // namespace iterforge
