#include "iterforge/scheduler/scheduler.hpp"

#include <cstdio>
#include <future>

#include "iterforge/common/error.hpp"
#include "iterforge/common/time.hpp"

namespace iterforge {

std::string_view to_string(DrainPolicy policy) {
  return policy == DrainPolicy::kBroken ? "broken" : "wait";
}

DrainPolicy parse_drain_policy(std::string_view text) {
  if (text == "broken") return DrainPolicy::kBroken;
  if (text == "wait") return DrainPolicy::kWait;
  throw Error(ErrorCode::kInvalidArgument, "unknown drain policy: " + std::string(text));
}

Scheduler::Scheduler(SchedulerOptions options, std::shared_ptr<TaskRunner> runner,
                     std::shared_ptr<TaskRepository> repository)
    : options_(options),
      runner_(std::move(runner)),
      repository_(std::move(repository)),
      pool_(options.gpu_pool_capacity) {}

Scheduler::~Scheduler() { shutdown(DrainPolicy::kBroken); }

void Scheduler::add_listener(TaskListener listener) { listeners_.push_back(std::move(listener)); }

void Scheduler::set_pool_observer(std::function<void(const PoolSnapshot&)> observer) {
  pool_.set_observer(std::move(observer));
}

void Scheduler::start(bool recover) {
  std::vector<TaskRecord> persisted = repository_->list();
  {
    std::unique_lock lock(records_mu_);
    for (auto& r : persisted) {
      ids_.observe(r.task_id);
      records_[r.task_id] = r;
    }
  }
  {
    std::lock_guard lock(queue_mu_);
    accepting_ = true;
  }
  authority_ = std::jthread([this](std::stop_token st) { authority_loop(st); });
  if (!recover) return;

  std::promise<void> done;
  post([this, &persisted, &done] {
    std::vector<std::string> resume;
    for (const auto& r : persisted) {
      if (is_terminal(r.state)) continue;
      if (r.state == TaskState::kPending) {
        resume.push_back(r.task_id);
        continue;
      }
      if (!r.gpu_grant.empty()) {
        try {
          pool_.restore(r.task_id, r.gpu_grant);
        } catch (const Error& e) {
          std::fprintf(stderr, "scheduler: %s\n", e.what());
        }
      }
      runner_->on_orphaned(r);
      {
        std::unique_lock lock(records_mu_);
        ++active_;
      }
      finish(r.task_id, TaskState::kBroken, "interrupted by service restart");
    }
    for (const auto& id : resume) {
      {
        std::unique_lock lock(records_mu_);
        ++active_;
      }
      begin(id);
    }
    done.set_value();
  });
  done.get_future().wait();
}

void Scheduler::shutdown(DrainPolicy drain) {
  {
    std::lock_guard lock(queue_mu_);
    if (!authority_.joinable()) return;
    accepting_ = false;
  }
  if (drain == DrainPolicy::kBroken) {
    post([this] {
      std::vector<std::string> ids;
      for (const auto& [id, run] : runs_) ids.push_back(id);
      for (const auto& id : ids) handle_stop(id);
    });
  }
  wait_idle(std::chrono::hours(1));
  authority_.request_stop();
  queue_cv_.notify_all();
  authority_.join();
}

void Scheduler::post(std::function<void()> command) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(command));
  }
  queue_cv_.notify_one();
}

void Scheduler::authority_loop(std::stop_token stop) {
  for (;;) {
    std::function<void()> command;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, stop, [&] { return !queue_.empty(); });
      if (queue_.empty()) return;
      command = std::move(queue_.front());
      queue_.pop_front();
    }
    try {
      command();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "scheduler: %s\n", e.what());
    }
  }
}

std::string Scheduler::submit(TaskSpec spec) {
  if (spec.gpu_count < 0) spec.gpu_count = needs_gpu(spec.kind) ? 1 : 0;
  if (needs_gpu(spec.kind)) {
    if (spec.gpu_count < 1 || spec.gpu_count > pool_.capacity()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "task requests " + std::to_string(spec.gpu_count) + " gpus, pool capacity is " +
                      std::to_string(pool_.capacity()));
    }
  } else if (spec.gpu_count != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(to_string(spec.kind)) + " tasks do not use gpus");
  }
  if (spec.user_id.empty()) throw Error(ErrorCode::kInvalidArgument, "user_id is empty");
  runner_->validate(spec);

  TaskRecord r;
  r.task_id = ids_.next();
  r.user_id = spec.user_id;
  r.kind = spec.kind;
  r.gpu_count = spec.gpu_count;
  r.inputs = std::move(spec.inputs);
  r.created_ms = now_ms();

  std::lock_guard lock(queue_mu_);
  if (!accepting_) throw Error(ErrorCode::kUnavailable, "scheduler is not accepting tasks");
  repository_->save(r);
  {
    std::unique_lock records_lock(records_mu_);
    records_[r.task_id] = r;
    ++active_;
  }
  std::string id = r.task_id;
  queue_.push_back([this, r] {
    for (const auto& l : listeners_) l(r);
    begin(r.task_id);
  });
  queue_cv_.notify_one();
  return id;
}

void Scheduler::stop_task(const std::string& task_id) {
  auto r = get(task_id);
  if (!r) throw Error(ErrorCode::kNotFound, "no task " + task_id);
  if (is_terminal(r->state)) return;
  post([this, task_id] { handle_stop(task_id); });
}

std::optional<TaskRecord> Scheduler::get(const std::string& task_id) const {
  std::shared_lock lock(records_mu_);
  auto it = records_.find(task_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<TaskRecord> Scheduler::list() const {
  std::shared_lock lock(records_mu_);
  std::vector<TaskRecord> out;
  out.reserve(records_.size());
  for (const auto& [id, r] : records_) out.push_back(r);
  return out;
}

std::optional<TaskRecord> Scheduler::wait(const std::string& task_id,
                                          std::chrono::milliseconds timeout) const {
  std::shared_lock lock(records_mu_);
  if (!records_.contains(task_id)) throw Error(ErrorCode::kNotFound, "no task " + task_id);
  bool ok = records_cv_.wait_for(lock, timeout,
                                 [&] { return is_terminal(records_.at(task_id).state); });
  if (!ok) return std::nullopt;
  return records_.at(task_id);
}

bool Scheduler::wait_idle(std::chrono::milliseconds timeout) const {
  std::shared_lock lock(records_mu_);
  return records_cv_.wait_for(lock, timeout, [&] { return active_ == 0; });
}

std::vector<SubtaskEvent> Scheduler::subtask_events() const {
  std::lock_guard lock(events_mu_);
  return events_;
}

void Scheduler::record_event(const std::string& task_id, SubtaskKind kind, bool finished,
                             SubtaskStatus status) {
  if (!options_.record_subtask_events) return;
  std::lock_guard lock(events_mu_);
  events_.push_back({task_id, kind, finished, status, steady_ns()});
}

void Scheduler::update(const std::string& task_id,
                       const std::function<void(TaskRecord&)>& mutate) {
  TaskRecord copy;
  {
    std::unique_lock lock(records_mu_);
    TaskRecord& r = records_.at(task_id);
    mutate(r);
    copy = r;
  }
  repository_->save(copy);
  for (const auto& l : listeners_) l(copy);
}

void Scheduler::transition(const std::string& task_id, TaskState to) {
  update(task_id, [&](TaskRecord& r) {
    if (!is_valid_transition(r.state, to)) {
      throw Error(ErrorCode::kInternal, "invalid transition " + std::string(to_string(r.state)) +
                                            " -> " + std::string(to_string(to)) + " for " +
                                            task_id);
    }
    r.state = to;
    if (to == TaskState::kRunning && r.started_ms == 0) r.started_ms = now_ms();
  });
}

void Scheduler::begin(const std::string& task_id) {
  auto r = get(task_id);
  Run& run = runs_[task_id];
  run.plan = decompose(r->kind);
  run.steps.assign(run.plan.size(), Step::kWaiting);
  pump(task_id);
}

void Scheduler::pump(const std::string& task_id) {
  auto it = runs_.find(task_id);
  if (it == runs_.end()) return;
  Run& run = it->second;

  auto worker_busy = [&] {
    for (std::size_t i = 0; i < run.plan.size(); ++i) {
      if (run.steps[i] == Step::kRunning && run.plan[i].kind != SubtaskKind::kAllocateGpu) {
        return true;
      }
    }
    return false;
  };

  auto release = [&](std::size_t i) {
    record_event(task_id, SubtaskKind::kReleaseGpu, false, SubtaskStatus::kOk);
    auto grants = pool_.release(task_id);
    run.steps[i] = Step::kDone;
    update(task_id, [](TaskRecord& r) { r.gpu_grant.clear(); });
    record_event(task_id, SubtaskKind::kReleaseGpu, true, SubtaskStatus::kOk);
    for (const auto& [other, ids] : grants) on_gpu_granted(other, ids);
  };

  if (run.failed || run.stop_requested) {
    for (std::size_t i = 0; i < run.plan.size(); ++i) {
      if (run.steps[i] == Step::kWaiting && run.plan[i].kind != SubtaskKind::kReleaseGpu) {
        run.steps[i] = Step::kCancelled;
      }
    }
    if (run.waiting_gpu) {
      auto unblocked = pool_.cancel(task_id);
      run.waiting_gpu = false;
      if (unblocked) {
        for (const auto& [other, ids] : *unblocked) on_gpu_granted(other, ids);
      }
      for (std::size_t i = 0; i < run.plan.size(); ++i) {
        if (run.plan[i].kind == SubtaskKind::kAllocateGpu && run.steps[i] == Step::kRunning) {
          run.steps[i] = Step::kCancelled;
        }
      }
    }
    if (worker_busy()) return;
    for (std::size_t i = 0; i < run.plan.size(); ++i) {
      if (run.steps[i] == Step::kWaiting && run.plan[i].kind == SubtaskKind::kReleaseGpu) {
        release(i);
      }
    }
    TaskState end = run.stop_requested ? TaskState::kBroken : TaskState::kFailure;
    std::string error = run.stop_requested ? "stopped by user" : run.error;
    finish(task_id, end, error);
    return;
  }

  for (bool progressed = true; progressed;) {
    progressed = false;
    for (std::size_t i = 0; i < run.plan.size(); ++i) {
      if (run.steps[i] != Step::kWaiting) continue;
      bool ready = true;
      for (int dep : run.plan[i].depends_on) {
        if (run.steps[static_cast<std::size_t>(dep)] != Step::kDone) ready = false;
      }
      if (!ready) continue;
      switch (run.plan[i].kind) {
        case SubtaskKind::kAllocateGpu: {
          run.steps[i] = Step::kRunning;
          record_event(task_id, SubtaskKind::kAllocateGpu, false, SubtaskStatus::kOk);
          int n = get(task_id)->gpu_count;
          auto ids = pool_.request(task_id, n);
          if (ids) {
            on_gpu_granted(task_id, *ids);
            return;
          }
          run.waiting_gpu = true;
          break;
        }
        case SubtaskKind::kReleaseGpu:
          release(i);
          progressed = true;
          break;
        default:
          if (worker_busy()) break;
          launch_worker(task_id, run, static_cast<int>(i));
          progressed = true;
          break;
      }
    }
  }

  bool all_done = true;
  for (auto step : run.steps) all_done = all_done && step == Step::kDone;
  if (all_done) finish(task_id, TaskState::kDone, "");
}

void Scheduler::on_gpu_granted(const std::string& task_id, const std::vector<int>& ids) {
  auto it = runs_.find(task_id);
  if (it == runs_.end()) {
    for (const auto& [other, granted] : pool_.release(task_id)) on_gpu_granted(other, granted);
    return;
  }
  Run& run = it->second;
  run.waiting_gpu = false;
  for (std::size_t i = 0; i < run.plan.size(); ++i) {
    if (run.plan[i].kind == SubtaskKind::kAllocateGpu) run.steps[i] = Step::kDone;
  }
  record_event(task_id, SubtaskKind::kAllocateGpu, true, SubtaskStatus::kOk);
  update(task_id, [&](TaskRecord& r) {
    r.gpu_grant = ids;
    r.outputs["gpu_ids"] = ids;
    r.state = TaskState::kPreparing;
  });
  pump(task_id);
}

void Scheduler::launch_worker(const std::string& task_id, Run& run, int index) {
  auto i = static_cast<std::size_t>(index);
  run.steps[i] = Step::kRunning;
  SubtaskKind kind = run.plan[i].kind;
  TaskRecord current = *get(task_id);
  if (kind == SubtaskKind::kRunExecutor) {
    transition(task_id, TaskState::kRunning);
  } else if (!needs_gpu(current.kind) && current.state == TaskState::kPending) {
    transition(task_id, TaskState::kPreparing);
    transition(task_id, TaskState::kRunning);
  }
  TaskRecord snapshot = *get(task_id);
  record_event(task_id, kind, false, SubtaskStatus::kOk);
  run.worker = std::jthread([this, task_id, index, kind, snapshot = std::move(snapshot),
                             token = run.stop.get_token()] {
    SubtaskResult result;
    try {
      result = runner_->execute(kind, snapshot, snapshot.gpu_grant, token);
    } catch (const std::exception& e) {
      result.status = SubtaskStatus::kFailed;
      result.message = e.what();
    }
    post([this, task_id, index, result = std::move(result)]() mutable {
      on_worker_done(task_id, index, std::move(result));
    });
  });
}

void Scheduler::on_worker_done(const std::string& task_id, int index, SubtaskResult result) {
  auto it = runs_.find(task_id);
  if (it == runs_.end()) return;
  Run& run = it->second;
  if (run.worker.joinable()) run.worker.join();
  auto i = static_cast<std::size_t>(index);
  record_event(task_id, run.plan[i].kind, true, result.status);

  std::size_t done = 0;
  for (auto step : run.steps) done += step == Step::kDone ? 1 : 0;
  if (result.status == SubtaskStatus::kOk) ++done;
  double fraction = static_cast<double>(done) / static_cast<double>(run.plan.size());
  update(task_id, [&](TaskRecord& r) {
    for (auto& [k, v] : result.outputs.items()) r.outputs[k] = v;
    if (result.status == SubtaskStatus::kOk) r.progress = std::max(r.progress, fraction);
  });

  switch (result.status) {
    case SubtaskStatus::kOk:
      run.steps[i] = Step::kDone;
      break;
    case SubtaskStatus::kStopped:
      run.steps[i] = Step::kFailed;
      run.stop_requested = true;
      break;
    case SubtaskStatus::kFailed:
      run.steps[i] = Step::kFailed;
      run.failed = true;
      run.error = std::string(to_string(run.plan[i].kind)) + ": " + result.message;
      break;
  }
  pump(task_id);
}

void Scheduler::handle_stop(const std::string& task_id) {
  auto it = runs_.find(task_id);
  if (it == runs_.end()) return;
  it->second.stop_requested = true;
  it->second.stop.request_stop();
  pump(task_id);
}

void Scheduler::finish(const std::string& task_id, TaskState state, const std::string& error) {
  if (auto it = runs_.find(task_id); it != runs_.end()) {
    if (it->second.worker.joinable()) it->second.worker.join();
    runs_.erase(it);
  }
  auto grants = pool_.release(task_id);
  if (get(task_id)->state == TaskState::kPreparing) transition(task_id, TaskState::kRunning);
  update(task_id, [&](TaskRecord& r) {
    if (!is_valid_transition(r.state, state)) {
      throw Error(ErrorCode::kInternal, "invalid transition " + std::string(to_string(r.state)) +
                                            " -> " + std::string(to_string(state)));
    }
    r.state = state;
    r.finished_ms = now_ms();
    r.gpu_grant.clear();
    r.error_message = error;
    if (state == TaskState::kDone) r.progress = 1.0;
  });
  TaskRecord final_record = *get(task_id);
  {
    std::unique_lock lock(records_mu_);
    --active_;
  }
  records_cv_.notify_all();
  try {
    runner_->on_terminal(final_record);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "scheduler: on_terminal %s: %s\n", task_id.c_str(), e.what());
  }
  for (const auto& [other, ids] : grants) on_gpu_granted(other, ids);
}

}  // namespace iterforge
