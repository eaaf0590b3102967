#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "iterforge/common/database.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/executor/monitor.hpp"
#include "iterforge/progress/event.hpp"
#include "iterforge/progress/monitor_poller.hpp"
#include "iterforge/progress/progress_bus.hpp"
#include "iterforge/progress/push_hub.hpp"
#include "iterforge/progress/status_store.hpp"
#include "iterforge/progress/stream_queue.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace iterforge;
using namespace std::chrono_literals;
using iterforge::testing::TempDir;
using iterforge::testing::wait_for;

namespace {

ProgressEvent ev(const std::string& task, std::int64_t ts, double progress, int code = 2,
                 const std::string& user = "u1") {
  ProgressEvent e;
  e.user_id = user;
  e.task_id = task;
  e.timestamp_ms = ts;
  e.progress = progress;
  e.state_code = code;
  return e;
}

class RecordingChannel : public PushChannel {
 public:
  void push(const ProgressEvent& e) override {
    std::lock_guard lock(mu);
    if (fail_next > 0) {
      --fail_next;
      throw std::runtime_error("push failed");
    }
    pushed.push_back(e);
  }
  std::mutex mu;
  int fail_next = 0;
  std::vector<ProgressEvent> pushed;
};

}  // namespace

TEST(Event, JsonRoundTripAndTaskMapping) {
  ProgressEvent e = ev("t1", 5, 0.5, 4);
  e.error_message = "bad";
  EXPECT_EQ(ProgressEvent::from_json(e.to_json()), e);
  TaskRecord r;
  r.task_id = "t2";
  r.user_id = "u9";
  r.state = TaskState::kBroken;
  r.error_message = "stopped";
  auto m = event_from_task(r, 77);
  EXPECT_EQ(m.state_code, 5);
  EXPECT_EQ(m.error_message, "stopped");
  EXPECT_EQ(m.timestamp_ms, 77);
  EXPECT_EQ(state_code_of(TaskState::kPreparing), 1);
  EXPECT_EQ(state_code_of(TaskState::kDone), 3);
  EXPECT_TRUE(is_terminal_code(5));
  EXPECT_FALSE(is_terminal_code(2));
}

TEST(Event, MergeStatusRules) {
  EXPECT_EQ(merge_status(std::nullopt, ev("t", 5, 0.3))->progress, 0.3);
  EXPECT_FALSE(merge_status(ev("t", 10, 0.5), ev("t", 9, 0.6)));
  EXPECT_EQ(merge_status(ev("t", 10, 0.5), ev("t", 11, 0.2))->progress, 0.5);
  EXPECT_FALSE(merge_status(ev("t", 10, 1.0, 3), ev("t", 12, 0.7, 2)));
  auto late_terminal = merge_status(ev("t", 10, 0.5, 2), ev("t", 9, 0.5, 4));
  ASSERT_TRUE(late_terminal);
  EXPECT_EQ(late_terminal->state_code, 4);
  EXPECT_FALSE(merge_status(ev("t", 10, 1.0, 3), ev("t", 9, 1.0, 5)));
}

// Folding any ordering of events never lowers progress and never leaves a
// terminal state.
TEST(Event, MergeStatusIsMonotoneOnRandomStreams) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::optional<ProgressEvent> cur;
    bool terminal = false;
    double high = 0;
    for (int i = 0; i < 30; ++i) {
      ProgressEvent e = ev("t", static_cast<std::int64_t>(rng() % 50),
                           static_cast<double>(rng() % 101) / 100.0, 1 + static_cast<int>(rng() % 5));
      if (auto m = merge_status(cur, e)) cur = m;
      EXPECT_GE(cur->progress, high);
      high = cur->progress;
      if (terminal) EXPECT_TRUE(is_terminal_code(cur->state_code));
      terminal = is_terminal_code(cur->state_code);
    }
  }
}

TEST(StreamQueue, DurableUntilAcked) {
  TempDir dir;
  fs::path file = dir / "q" / "progress.queue";
  {
    StreamQueue q(file);
    q.enqueue({ev("a", 1, 0.1), ev("b", 2, 0.2)});
    q.enqueue({ev("c", 3, 0.3)});
    auto p = q.pending();
    ASSERT_EQ(p.size(), 3u);
    q.ack({p[0].seq});
  }
  StreamQueue q(file);
  auto p = q.pending();
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].event.task_id, "b");
  EXPECT_LT(p[0].seq, p[1].seq);
  q.enqueue({ev("d", 4, 0.4)});
  EXPECT_GT(q.pending().back().seq, p[1].seq);
}

TEST(StreamQueue, TornTailIgnoredOnLoad) {
  TempDir dir;
  fs::path file = dir / "progress.queue";
  {
    StreamQueue q(file);
    q.enqueue({ev("a", 1, 0.1)});
  }
  {
    std::FILE* f = std::fopen(file.c_str(), "ab");
    std::fputs("{\"a\":9,\"e\":{\"task", f);
    std::fclose(f);
  }
  StreamQueue q(file);
  EXPECT_EQ(q.size(), 1u);
}

TEST(StreamQueue, CapacityBoundsAndStop) {
  StreamQueue q({}, 2);
  q.try_enqueue({ev("a", 1, 0)});
  q.try_enqueue({ev("b", 1, 0)});
  try {
    q.try_enqueue({ev("c", 1, 0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kResourceExhausted);
  }
  std::stop_source stop;
  std::thread t([&] {
    std::this_thread::sleep_for(20ms);
    stop.request_stop();
  });
  EXPECT_FALSE(q.enqueue({ev("c", 1, 0)}, stop.get_token()));
  t.join();
  q.requeue({ev("d", 1, 0)});
  EXPECT_EQ(q.size(), 3u);
  EXPECT_THROW(StreamQueue({}, 0), Error);
}

TEST(StreamQueue, BlockedProducerResumesAfterAck) {
  StreamQueue q({}, 1);
  q.enqueue({ev("a", 1, 0)});
  std::atomic<bool> done{false};
  std::thread producer([&] {
    q.enqueue({ev("b", 2, 0)});
    done = true;
  });
  std::this_thread::sleep_for(20ms);
  EXPECT_FALSE(done);
  q.ack({q.pending()[0].seq});
  producer.join();
  EXPECT_EQ(q.pending()[0].event.task_id, "b");
}

TEST(Dispatcher, CoalescesLatestPerUserAndTask) {
  StreamQueue q;
  auto store = std::make_shared<MemoryStatusStore>();
  auto ch = std::make_shared<RecordingChannel>();
  Dispatcher d(q, store, ch);
  q.enqueue({ev("t1", 1, 0.1), ev("t1", 2, 0.4), ev("t2", 1, 0.5), ev("t3", 3, 0.6, 2, "u2"),
             ev("t1", 4, 0.3)});
  DispatchReport r = d.dispatch_batch();
  EXPECT_EQ(r.drained, 5u);
  EXPECT_EQ(r.delivered, 3u);
  EXPECT_EQ(ch->pushed.size(), 3u);
  EXPECT_EQ(q.size(), 0u);
  EXPECT_EQ(d.dispatch_batch().drained, 0u);
}

TEST(Dispatcher, DropsStaleEventsAgainstPersistedStatus) {
  StreamQueue q;
  auto store = std::make_shared<MemoryStatusStore>();
  store->put(ev("t1", 10, 1.0, 3));
  auto ch = std::make_shared<RecordingChannel>();
  Dispatcher d(q, store, ch);
  q.enqueue({ev("t1", 11, 0.2, 2)});
  auto r = d.dispatch_batch();
  EXPECT_EQ(r.dropped, 1u);
  EXPECT_TRUE(ch->pushed.empty());
  EXPECT_EQ(store->get("t1")->state_code, 3);
}

TEST(Dispatcher, FailedDeliveryIsRequeuedNotLost) {
  StreamQueue q;
  auto inner = std::make_shared<MemoryStatusStore>();
  auto ch = std::make_shared<RecordingChannel>();
  ch->fail_next = 1;
  Dispatcher d(q, inner, ch);
  q.enqueue({ev("t1", 1, 1.0, 3)});
  auto r = d.dispatch_batch();
  EXPECT_EQ(r.requeued, 1u);
  EXPECT_EQ(q.size(), 1u);
  r = d.dispatch_batch();
  EXPECT_EQ(r.delivered, 1u);
  EXPECT_EQ(ch->pushed.size(), 1u);
}

TEST(Dispatcher, FlakyStoreEventuallyPersistsEverything) {
  StreamQueue q;
  auto inner = std::make_shared<MemoryStatusStore>();
  auto flaky = std::make_shared<FlakyStatusStore>(inner, 0.5, 11);
  auto ch = std::make_shared<RecordingChannel>();
  Dispatcher d(q, flaky, ch);
  for (int t = 0; t < 50; ++t) {
    q.enqueue({ev("t" + std::to_string(t), 1, 0.5), ev("t" + std::to_string(t), 2, 1.0, 3 + t % 3)});
  }
  for (int i = 0; i < 200 && q.size() > 0; ++i) {
    auto r = d.dispatch_batch();
    std::set<std::string> keys;
    for (const auto& e : r.pushed) EXPECT_TRUE(keys.insert(e.user_id + "/" + e.task_id).second);
  }
  EXPECT_EQ(q.size(), 0u);
  EXPECT_GT(flaky->failures(), 0u);
  for (int t = 0; t < 50; ++t) EXPECT_EQ(inner->get("t" + std::to_string(t))->state_code, 3 + t % 3);
}

TEST(StatusStore, SqlitePersistsLatest) {
  TempDir dir;
  auto db = std::make_shared<Database>(dir / "p.db");
  {
    SqliteStatusStore s(db);
    s.put(ev("t1", 1, 0.1));
    s.put(ev("t1", 2, 0.7, 2));
  }
  SqliteStatusStore s(db);
  EXPECT_EQ(s.get("t1")->progress, 0.7);
  EXPECT_FALSE(s.get("t9"));
}

TEST(PushHub, RoutesByUserAndClosesSlowSubscribers) {
  PushHub hub;
  auto a = hub.subscribe("alice");
  auto b = hub.subscribe("bob");
  hub.push(ev("t1", 1, 0.5, 2, "alice"));
  auto frame = a->next(100ms);
  ASSERT_TRUE(frame);
  EXPECT_EQ(nlohmann::json::parse(*frame)["task_id"], "t1");
  EXPECT_FALSE(b->next(10ms));
  EXPECT_EQ(hub.subscriber_count("alice"), 1u);
  hub.unsubscribe(a);
  EXPECT_EQ(hub.subscriber_count("alice"), 0u);

  Subscription slow("carol", 2);
  EXPECT_TRUE(slow.offer("1"));
  EXPECT_TRUE(slow.offer("2"));
  EXPECT_FALSE(slow.offer("3"));
  EXPECT_TRUE(slow.closed());
  hub.close_all();
  EXPECT_TRUE(b->closed());
}

TEST(MonitorPoller, EmitsOnlyChanges) {
  TempDir dir;
  MonitorPoller poller;
  fs::path f = dir / "monitor.txt";
  poller.watch("u1", "t1", f);
  EXPECT_TRUE(poller.poll().empty());
  write_monitor_atomic(f, {"t1", 100, 0.3, MonitorState::kRunning, {"epoch 1"}});
  auto e = poller.poll();
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].state_message, "epoch 1");
  EXPECT_TRUE(poller.poll().empty());
  write_monitor_atomic(f, {"t1", 200, 0.5, MonitorState::kError, {"oom"}});
  e = poller.poll();
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].state_code, 4);
  EXPECT_EQ(e[0].error_message, "oom");
  write_file(f, "junk");
  EXPECT_TRUE(poller.poll().empty());
  EXPECT_EQ(poller.warnings(), 1u);
  poller.unwatch("t1");
  EXPECT_EQ(poller.watched(), 0u);
}

TEST(ProgressBus, LoopsDeliverMonitorUpdates) {
  TempDir dir;
  auto queue = std::make_shared<StreamQueue>(dir / "q");
  auto store = std::make_shared<MemoryStatusStore>();
  auto hub = std::make_shared<PushHub>();
  auto sub = hub->subscribe("u1");
  ProgressBus bus(ProgressBusOptions{20ms, 30ms}, queue, store, hub);
  fs::path f = dir / "monitor.txt";
  bus.poller().watch("u1", "t1", f);
  bus.start();
  write_monitor_atomic(f, {"t1", 100, 0.4, MonitorState::kRunning, {}});
  EXPECT_TRUE(wait_for([&] { return store->get("t1") && store->get("t1")->progress == 0.4; }, 2s));
  auto frame = sub->next(1s);
  ASSERT_TRUE(frame);
  bus.publish(ev("t1", 200, 1.0, 3));
  bus.stop();
  EXPECT_EQ(store->get("t1")->state_code, 3);
  EXPECT_EQ(queue->size(), 0u);
}
