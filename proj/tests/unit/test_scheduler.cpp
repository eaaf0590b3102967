#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <set>
#include <thread>

#include "iterforge/common/database.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/scheduler/gpu_pool.hpp"
#include "iterforge/scheduler/scheduler.hpp"
#include "iterforge/scheduler/task_repository.hpp"
#include "test_support.hpp"

using namespace iterforge;
using namespace std::chrono_literals;
using iterforge::testing::TempDir;
using iterforge::testing::wait_for;

namespace {

// Behaviour comes from the task inputs:
//   sleep_ms   time spent in each subtask
//   fail_at    subtask kind name that reports failure
//   throw_at   subtask kind name that throws
//   block      run-executor / dataset-op wait for a stop
//   invalid    validate() rejects the spec
class ScriptedRunner : public TaskRunner {
 public:
  void validate(const TaskSpec& spec) override {
    if (spec.inputs.value("invalid", false)) throw Error(ErrorCode::kInvalidArgument, "rejected");
  }

  SubtaskResult execute(SubtaskKind kind, const TaskRecord& task, std::span<const int> gpus,
                        std::stop_token stop) override {
    {
      std::lock_guard lock(mu);
      calls.push_back({task.task_id, kind, std::vector<int>(gpus.begin(), gpus.end())});
    }
    std::string name(to_string(kind));
    std::this_thread::sleep_for(std::chrono::milliseconds(task.inputs.value("sleep_ms", 0)));
    if (task.inputs.value("throw_at", "") == name) throw std::runtime_error("kaboom");
    if (task.inputs.value("fail_at", "") == name) return {SubtaskStatus::kFailed, "scripted failure", {}};
    bool blocking = kind == SubtaskKind::kRunExecutor || kind == SubtaskKind::kDatasetOp;
    if (blocking && task.inputs.value("block", false)) {
      while (!stop.stop_requested()) std::this_thread::sleep_for(1ms);
      return {SubtaskStatus::kStopped, "stopped by user", {}};
    }
    return {SubtaskStatus::kOk, "", {{name, true}}};
  }

  void on_terminal(const TaskRecord& task) override {
    std::lock_guard lock(mu);
    terminal.push_back(task.task_id);
  }

  void on_orphaned(const TaskRecord& task) override {
    std::lock_guard lock(mu);
    orphaned.push_back(task.task_id);
  }

  struct Call {
    std::string task;
    SubtaskKind kind;
    std::vector<int> gpus;
  };
  std::mutex mu;
  std::vector<Call> calls;
  std::vector<std::string> terminal;
  std::vector<std::string> orphaned;
};

TaskSpec spec(TaskKind kind, nlohmann::json inputs = nlohmann::json::object(), int gpus = -1) {
  TaskSpec s;
  s.kind = kind;
  s.inputs = std::move(inputs);
  s.gpu_count = gpus;
  return s;
}

struct Rig {
  explicit Rig(int capacity = 2, std::shared_ptr<TaskRepository> repo = std::make_shared<MemoryTaskRepository>())
      : runner(std::make_shared<ScriptedRunner>()), repo(repo) {
    SchedulerOptions o;
    o.gpu_pool_capacity = capacity;
    o.record_subtask_events = true;
    sched = std::make_unique<Scheduler>(o, runner, repo);
  }
  std::shared_ptr<ScriptedRunner> runner;
  std::shared_ptr<TaskRepository> repo;
  std::unique_ptr<Scheduler> sched;
};

}  // namespace

TEST(TaskModel, DecomposeIsTopologicallyOrdered) {
  for (auto kind : {TaskKind::kImport, TaskKind::kDatasetOp, TaskKind::kLabel, TaskKind::kTrain,
                    TaskKind::kMine, TaskKind::kInfer}) {
    auto plan = decompose(kind);
    ASSERT_FALSE(plan.empty());
    for (std::size_t i = 0; i < plan.size(); ++i) {
      EXPECT_EQ(plan[i].id, static_cast<int>(i));
      for (int d : plan[i].depends_on) EXPECT_LT(d, plan[i].id);
    }
    bool has_alloc = std::any_of(plan.begin(), plan.end(),
                                 [](const auto& s) { return s.kind == SubtaskKind::kAllocateGpu; });
    EXPECT_EQ(has_alloc, needs_gpu(kind));
  }
}

TEST(TaskModel, TransitionsFollowTheLifecycle) {
  EXPECT_TRUE(is_valid_transition(TaskState::kPending, TaskState::kPreparing));
  EXPECT_TRUE(is_valid_transition(TaskState::kPreparing, TaskState::kRunning));
  EXPECT_TRUE(is_valid_transition(TaskState::kRunning, TaskState::kDone));
  EXPECT_TRUE(is_valid_transition(TaskState::kPending, TaskState::kBroken));
  EXPECT_TRUE(is_valid_transition(TaskState::kPending, TaskState::kFailure));
  EXPECT_FALSE(is_valid_transition(TaskState::kPending, TaskState::kDone));
  EXPECT_FALSE(is_valid_transition(TaskState::kDone, TaskState::kRunning));
  EXPECT_FALSE(is_valid_transition(TaskState::kBroken, TaskState::kFailure));
}

TEST(TaskModel, RecordJsonRoundTrip) {
  TaskRecord r;
  r.task_id = "t-000007";
  r.kind = TaskKind::kMine;
  r.state = TaskState::kRunning;
  r.gpu_count = 2;
  r.gpu_grant = {0, 1};
  r.inputs = {{"a", 1}};
  r.outputs = {{"b", "c"}};
  r.error_message = "e";
  EXPECT_EQ(TaskRecord::from_json(r.to_json()), r);
  EXPECT_EQ(parse_task_kind("dataset-op"), TaskKind::kDatasetOp);
  EXPECT_THROW(parse_task_kind("sing"), Error);
}

TEST(GpuPool, GrantsLowestIdsAndQueuesFifo) {
  GpuPool pool(4);
  EXPECT_EQ(*pool.request("a", 2), (std::vector<int>{0, 1}));
  EXPECT_EQ(*pool.request("b", 1), (std::vector<int>{2}));
  EXPECT_FALSE(pool.request("c", 2));
  EXPECT_FALSE(pool.request("d", 1));
  auto grants = pool.release("a");
  ASSERT_EQ(grants.size(), 2u);
  EXPECT_EQ(grants[0].first, "c");
  EXPECT_EQ(grants[1].first, "d");
  EXPECT_EQ(pool.snapshot().free(), 0);
  EXPECT_TRUE(pool.release("a").empty());
}

TEST(GpuPool, StrictFifoBlocksSmallerLaterRequests) {
  GpuPool pool(2);
  pool.request("a", 1);
  EXPECT_FALSE(pool.request("big", 2));
  EXPECT_FALSE(pool.request("small", 1));
  EXPECT_EQ(pool.snapshot().free(), 1);
  auto unblocked = pool.cancel("big");
  ASSERT_TRUE(unblocked);
  ASSERT_EQ(unblocked->size(), 1u);
  EXPECT_EQ((*unblocked)[0].first, "small");
  EXPECT_FALSE(pool.cancel("big"));
  EXPECT_TRUE(pool.grant_of("small"));
}

TEST(GpuPool, RejectsBadRequests) {
  GpuPool pool(2);
  EXPECT_THROW(pool.request("a", 0), Error);
  EXPECT_THROW(pool.request("a", 3), Error);
  pool.request("a", 1);
  EXPECT_THROW(pool.request("a", 1), Error);
  EXPECT_THROW(pool.restore("b", {0}), Error);
  pool.restore("c", {1});
  EXPECT_EQ(pool.snapshot().free(), 0);
}

TEST(GpuPool, RandomizedConservation) {
  GpuPool pool(5);
  std::set<std::string> holders, waiting;
  int observed = 0;
  pool.set_observer([&](const PoolSnapshot& s) {
    ++observed;
    std::set<int> ids;
    for (const auto& [t, g] : s.allocations) {
      for (int i : g) {
        EXPECT_TRUE(ids.insert(i).second);
        EXPECT_GE(i, 0);
        EXPECT_LT(i, s.capacity);
      }
    }
    EXPECT_LE(s.allocated(), s.capacity);
  });
  std::mt19937_64 rng(3);
  auto admit = [&](const std::vector<GpuPool::Grant>& grants) {
    for (const auto& [g, ids] : grants) {
      EXPECT_TRUE(waiting.erase(g));
      holders.insert(g);
    }
  };
  for (int i = 0; i < 2000; ++i) {
    std::string t = "t" + std::to_string(rng() % 40);
    if (waiting.contains(t)) {
      waiting.erase(t);
      admit(*pool.cancel(t));
    } else if (holders.contains(t)) {
      holders.erase(t);
      admit(pool.release(t));
    } else if (pool.request(t, 1 + static_cast<int>(rng() % 5))) {
      holders.insert(t);
    } else {
      waiting.insert(t);
    }
    EXPECT_EQ(pool.snapshot().queue.size(), waiting.size());
    EXPECT_EQ(pool.snapshot().allocations.size(), holders.size());
  }
  while (!waiting.empty()) {
    std::string t = *waiting.begin();
    waiting.erase(t);
    admit(*pool.cancel(t));
  }
  while (!holders.empty()) {
    std::string t = *holders.begin();
    holders.erase(t);
    admit(pool.release(t));
  }
  EXPECT_EQ(pool.snapshot().free(), 5);
  EXPECT_GT(observed, 0);
}

TEST(Scheduler, GpuTaskRunsPlanInOrder) {
  Rig rig;
  rig.sched->start();
  std::string id = rig.sched->submit(spec(TaskKind::kTrain));
  auto t = rig.sched->wait(id, 5s);
  ASSERT_TRUE(t);
  EXPECT_EQ(t->state, TaskState::kDone);
  EXPECT_EQ(t->progress, 1.0);
  EXPECT_TRUE(t->gpu_grant.empty());
  EXPECT_TRUE(t->outputs.contains("run-executor"));
  std::vector<SubtaskKind> order;
  for (const auto& e : rig.sched->subtask_events()) {
    if (e.task_id == id && !e.finished) order.push_back(e.kind);
  }
  EXPECT_EQ(order, (std::vector<SubtaskKind>{SubtaskKind::kPrepareData, SubtaskKind::kAllocateGpu,
                                             SubtaskKind::kRunExecutor, SubtaskKind::kCollectResults,
                                             SubtaskKind::kReleaseGpu}));
  for (const auto& c : rig.runner->calls) {
    if (c.kind == SubtaskKind::kRunExecutor) EXPECT_EQ(c.gpus, std::vector<int>{0});
  }
  EXPECT_EQ(rig.sched->pool().free(), 2);
  rig.sched->shutdown();
  EXPECT_EQ(rig.runner->terminal, std::vector<std::string>{id});
}

TEST(Scheduler, SubmitValidation) {
  Rig rig(2);
  rig.sched->start();
  EXPECT_THROW(rig.sched->submit(spec(TaskKind::kTrain, nlohmann::json::object(), 3)), Error);
  EXPECT_THROW(rig.sched->submit(spec(TaskKind::kTrain, nlohmann::json::object(), 0)), Error);
  EXPECT_THROW(rig.sched->submit(spec(TaskKind::kDatasetOp, nlohmann::json::object(), 1)), Error);
  EXPECT_THROW(rig.sched->submit(spec(TaskKind::kDatasetOp, {{"invalid", true}})), Error);
  TaskSpec anon = spec(TaskKind::kDatasetOp);
  anon.user_id = "";
  EXPECT_THROW(rig.sched->submit(anon), Error);
  EXPECT_TRUE(rig.sched->list().empty());
  EXPECT_THROW(rig.sched->stop_task("t-999999"), Error);
  rig.sched->shutdown();
  EXPECT_THROW(rig.sched->submit(spec(TaskKind::kDatasetOp)), Error);
}

TEST(Scheduler, FailureAndThrowBecomeFailureAndReleaseGpu) {
  Rig rig;
  rig.sched->start();
  std::string a = rig.sched->submit(spec(TaskKind::kMine, {{"fail_at", "run-executor"}}));
  std::string b = rig.sched->submit(spec(TaskKind::kInfer, {{"throw_at", "collect-results"}}));
  std::string c = rig.sched->submit(spec(TaskKind::kDatasetOp, {{"fail_at", "dataset-op"}}));
  auto ta = rig.sched->wait(a, 5s), tb = rig.sched->wait(b, 5s), tc = rig.sched->wait(c, 5s);
  EXPECT_EQ(ta->state, TaskState::kFailure);
  EXPECT_NE(ta->error_message.find("scripted failure"), std::string::npos);
  EXPECT_EQ(tb->state, TaskState::kFailure);
  EXPECT_NE(tb->error_message.find("kaboom"), std::string::npos);
  EXPECT_EQ(tc->state, TaskState::kFailure);
  EXPECT_EQ(rig.sched->pool().free(), 2);
  rig.sched->shutdown();
}

TEST(Scheduler, StopRunningAndPendingTasks) {
  Rig rig(1);
  rig.sched->start();
  std::string running = rig.sched->submit(spec(TaskKind::kTrain, {{"block", true}}));
  std::string queued = rig.sched->submit(spec(TaskKind::kTrain));
  ASSERT_TRUE(wait_for([&] { return rig.sched->get(running)->state == TaskState::kRunning; }, 5s));
  EXPECT_EQ(rig.sched->pool().queue.size(), 1u);
  rig.sched->stop_task(queued);
  EXPECT_EQ(rig.sched->wait(queued, 5s)->state, TaskState::kBroken);
  EXPECT_EQ(rig.sched->get(running)->state, TaskState::kRunning);
  rig.sched->stop_task(running);
  auto t = rig.sched->wait(running, 5s);
  EXPECT_EQ(t->state, TaskState::kBroken);
  rig.sched->stop_task(running);
  EXPECT_EQ(rig.sched->get(running)->state, TaskState::kBroken);
  EXPECT_EQ(rig.sched->pool().free(), 1);
  EXPECT_TRUE(rig.sched->pool().queue.empty());
  rig.sched->shutdown();
}

TEST(Scheduler, GpuTasksWaitForCapacity) {
  Rig rig(2);
  rig.sched->start();
  std::string big = rig.sched->submit(spec(TaskKind::kTrain, {{"block", true}}, 2));
  ASSERT_TRUE(wait_for([&] { return rig.sched->get(big)->state == TaskState::kRunning; }, 5s));
  std::string next = rig.sched->submit(spec(TaskKind::kTrain, nlohmann::json::object(), 1));
  ASSERT_TRUE(wait_for([&] { return rig.sched->pool().queue.size() == 1; }, 5s));
  EXPECT_EQ(rig.sched->get(next)->state, TaskState::kPending);
  std::string cpu = rig.sched->submit(spec(TaskKind::kDatasetOp));
  EXPECT_EQ(rig.sched->wait(cpu, 5s)->state, TaskState::kDone);
  rig.sched->stop_task(big);
  EXPECT_EQ(rig.sched->wait(next, 5s)->state, TaskState::kDone);
  rig.sched->shutdown();
}

TEST(Scheduler, StoppingQueueHeadUnblocksRequestsBehindIt) {
  Rig rig(2);
  rig.sched->start();
  std::string holder = rig.sched->submit(spec(TaskKind::kTrain, {{"block", true}}, 1));
  ASSERT_TRUE(wait_for([&] { return rig.sched->get(holder)->state == TaskState::kRunning; }, 5s));
  std::string big = rig.sched->submit(spec(TaskKind::kTrain, nlohmann::json::object(), 2));
  std::string small = rig.sched->submit(spec(TaskKind::kTrain, nlohmann::json::object(), 1));
  ASSERT_TRUE(wait_for([&] { return rig.sched->pool().queue.size() == 2; }, 5s));
  rig.sched->stop_task(big);
  EXPECT_EQ(rig.sched->wait(big, 5s)->state, TaskState::kBroken);
  EXPECT_EQ(rig.sched->wait(small, 5s)->state, TaskState::kDone);
  EXPECT_EQ(rig.sched->get(holder)->state, TaskState::kRunning);
  rig.sched->stop_task(holder);
  rig.sched->shutdown();
}

TEST(Scheduler, ListenersSeeEveryPersistedChange) {
  Rig rig;
  std::mutex mu;
  std::vector<TaskState> seen;
  rig.sched->add_listener([&](const TaskRecord& r) {
    std::lock_guard lock(mu);
    seen.push_back(r.state);
  });
  rig.sched->start();
  std::string id = rig.sched->submit(spec(TaskKind::kTrain));
  rig.sched->wait(id, 5s);
  rig.sched->shutdown();
  ASSERT_GE(seen.size(), 4u);
  EXPECT_EQ(seen.front(), TaskState::kPending);
  EXPECT_EQ(seen.back(), TaskState::kDone);
  EXPECT_NE(std::find(seen.begin(), seen.end(), TaskState::kRunning), seen.end());
}

TEST(Scheduler, ShutdownBrokenStopsInFlight) {
  Rig rig;
  rig.sched->start();
  std::string id = rig.sched->submit(spec(TaskKind::kTrain, {{"block", true}}));
  ASSERT_TRUE(wait_for([&] { return rig.sched->get(id)->state == TaskState::kRunning; }, 5s));
  rig.sched->shutdown(DrainPolicy::kBroken);
  EXPECT_EQ(rig.repo->load(id)->state, TaskState::kBroken);
}

TEST(Scheduler, ShutdownWaitLetsTasksFinish) {
  Rig rig;
  rig.sched->start();
  std::string id = rig.sched->submit(spec(TaskKind::kTrain, {{"sleep_ms", 30}}));
  rig.sched->shutdown(DrainPolicy::kWait);
  EXPECT_EQ(rig.repo->load(id)->state, TaskState::kDone);
}

TEST(Scheduler, RecoveryMarksInFlightBrokenAndResumesPending) {
  TempDir dir;
  auto db = std::make_shared<Database>(dir / "p.db");
  auto repo = std::make_shared<SqliteTaskRepository>(db);
  TaskRecord running;
  running.task_id = "t-000003";
  running.kind = TaskKind::kTrain;
  running.state = TaskState::kRunning;
  running.gpu_count = 1;
  running.gpu_grant = {1};
  repo->save(running);
  TaskRecord pending;
  pending.task_id = "t-000004";
  pending.kind = TaskKind::kDatasetOp;
  repo->save(pending);
  TaskRecord done = pending;
  done.task_id = "t-000001";
  done.state = TaskState::kDone;
  repo->save(done);

  Rig rig(2, repo);
  rig.sched->start(true);
  auto r = rig.sched->wait("t-000003", 5s);
  EXPECT_EQ(r->state, TaskState::kBroken);
  EXPECT_EQ(r->error_message, "interrupted by service restart");
  EXPECT_EQ(rig.runner->orphaned, std::vector<std::string>{"t-000003"});
  EXPECT_EQ(rig.sched->wait("t-000004", 5s)->state, TaskState::kDone);
  EXPECT_EQ(rig.sched->get("t-000001")->state, TaskState::kDone);
  EXPECT_EQ(rig.sched->pool().free(), 2);
  EXPECT_EQ(rig.sched->submit(spec(TaskKind::kDatasetOp)), "t-000005");
  rig.sched->shutdown();
}

TEST(Scheduler, StartWithoutRecoveryLeavesRecordsAlone) {
  auto repo = std::make_shared<MemoryTaskRepository>();
  TaskRecord running;
  running.task_id = "t-000001";
  running.kind = TaskKind::kTrain;
  running.state = TaskState::kRunning;
  repo->save(running);
  Rig rig(2, repo);
  rig.sched->start(false);
  EXPECT_EQ(rig.sched->get("t-000001")->state, TaskState::kRunning);
  EXPECT_TRUE(rig.runner->orphaned.empty());
}

TEST(Scheduler, SqliteRepositoryRoundTrip) {
  TempDir dir;
  auto db = std::make_shared<Database>(dir / "p.db");
  SqliteTaskRepository repo(db);
  TaskRecord r;
  r.task_id = "t-000001";
  r.kind = TaskKind::kLabel;
  r.inputs = {{"dataset", "ds-000001"}};
  repo.save(r);
  r.state = TaskState::kPreparing;
  repo.save(r);
  EXPECT_EQ(*repo.load("t-000001"), r);
  EXPECT_EQ(repo.list().size(), 1u);
  EXPECT_FALSE(repo.load("t-000002"));
}
