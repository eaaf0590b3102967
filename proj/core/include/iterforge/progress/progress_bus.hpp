#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "iterforge/progress/event.hpp"
#include "iterforge/progress/monitor_poller.hpp"
#include "iterforge/progress/push_hub.hpp"
#include "iterforge/progress/status_store.hpp"
#include "iterforge/progress/stream_queue.hpp"

namespace iterforge {

struct DispatchReport {
  std::size_t drained = 0;    // queue entries taken
  std::size_t delivered = 0;  // coalesced events persisted and pushed
  std::size_t dropped = 0;    // stale or regressing events discarded
  std::size_t requeued = 0;   // coalesced events written back after a failure
  std::vector<ProgressEvent> pushed;
};

// Drains the queue, keeps the latest event per (user, task), persists it
// and then pushes it. Entries are acknowledged only after the coalesced
// event is persisted and pushed or written back to the queue.
class Dispatcher {
 public:
  Dispatcher(StreamQueue& queue, std::shared_ptr<StatusStore> store,
             std::shared_ptr<PushChannel> channel);
  DispatchReport dispatch_batch();

 private:
  StreamQueue& queue_;
  std::shared_ptr<StatusStore> store_;
  std::shared_ptr<PushChannel> channel_;
};

struct ProgressBusOptions {
  std::chrono::milliseconds poll_interval{500};
  std::chrono::milliseconds dispatch_interval{1000};
};

// Poller thread + dispatcher thread around one queue.
class ProgressBus {
 public:
  ProgressBus(ProgressBusOptions options, std::shared_ptr<StreamQueue> queue,
              std::shared_ptr<StatusStore> store, std::shared_ptr<PushChannel> channel);
  ~ProgressBus();

  void start();
  // Stops both loops after a final poll and dispatch.
  void stop();

  MonitorPoller& poller() { return poller_; }
  StreamQueue& queue() { return *queue_; }
  StatusStore& store() { return *store_; }

  // Enqueues events produced outside the poller (scheduler, labeling).
  void publish(const ProgressEvent& event);
  // One poll round: reads monitors and enqueues the changes.
  std::size_t poll_once();
  DispatchReport dispatch_once();

  // Observes every dispatch report (tests, metrics).
  void set_dispatch_observer(std::function<void(const DispatchReport&)> observer);

 private:
  ProgressBusOptions options_;
  std::shared_ptr<StreamQueue> queue_;
  std::shared_ptr<StatusStore> store_;
  MonitorPoller poller_;
  Dispatcher dispatcher_;
  std::mutex dispatch_mu_;
  std::function<void(const DispatchReport&)> observer_;
  std::jthread poll_thread_;
  std::jthread dispatch_thread_;
};

}  // namespace iterforge
