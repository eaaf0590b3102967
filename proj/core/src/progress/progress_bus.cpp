#include "iterforge/progress/progress_bus.hpp"

#include <cstdio>
#include <map>

namespace iterforge {

Dispatcher::Dispatcher(StreamQueue& queue, std::shared_ptr<StatusStore> store,
                       std::shared_ptr<PushChannel> channel)
    : queue_(queue), store_(std::move(store)), channel_(std::move(channel)) {}

DispatchReport Dispatcher::dispatch_batch() {
  DispatchReport report;
  std::vector<QueueEntry> entries = queue_.pending();
  if (entries.empty()) return report;
  report.drained = entries.size();

  std::map<std::pair<std::string, std::string>, ProgressEvent> latest;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& entry : entries) {
    auto key = std::make_pair(entry.event.user_id, entry.event.task_id);
    auto it = latest.find(key);
    if (it == latest.end()) {
      latest.emplace(key, entry.event);
      order.push_back(key);
    } else if (auto merged = merge_status(it->second, entry.event)) {
      it->second = *merged;
    }
  }

  std::vector<ProgressEvent> failed;
  for (const auto& key : order) {
    const ProgressEvent& event = latest.at(key);
    try {
      auto merged = merge_status(store_->get(event.task_id), event);
      if (!merged) {
        ++report.dropped;
        continue;
      }
      store_->put(*merged);
      channel_->push(*merged);
      ++report.delivered;
      report.pushed.push_back(*merged);
    } catch (const std::exception&) {
      failed.push_back(event);
    }
  }
  queue_.requeue(failed);
  report.requeued = failed.size();

  std::vector<std::uint64_t> seqs;
  seqs.reserve(entries.size());
  for (const auto& entry : entries) seqs.push_back(entry.seq);
  queue_.ack(seqs);
  return report;
}

ProgressBus::ProgressBus(ProgressBusOptions options, std::shared_ptr<StreamQueue> queue,
                         std::shared_ptr<StatusStore> store, std::shared_ptr<PushChannel> channel)
    : options_(options),
      queue_(std::move(queue)),
      store_(store),
      dispatcher_(*queue_, std::move(store), std::move(channel)) {}

ProgressBus::~ProgressBus() { stop(); }

void ProgressBus::start() {
  poll_thread_ = std::jthread([this](std::stop_token st) {
    std::mutex m;
    std::condition_variable_any cv;
    while (!st.stop_requested()) {
      try {
        auto events = poller_.poll();
        queue_->enqueue(events, st);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "progress poller: %s\n", e.what());
      }
      std::unique_lock lock(m);
      cv.wait_for(lock, st, options_.poll_interval, [] { return false; });
    }
  });
  dispatch_thread_ = std::jthread([this](std::stop_token st) {
    std::mutex m;
    std::condition_variable_any cv;
    while (!st.stop_requested()) {
      std::unique_lock lock(m);
      cv.wait_for(lock, st, options_.dispatch_interval, [] { return false; });
      lock.unlock();
      try {
        dispatch_once();
      } catch (const std::exception& e) {
        std::fprintf(stderr, "progress dispatcher: %s\n", e.what());
      }
    }
  });
}

void ProgressBus::stop() {
  bool was_running = poll_thread_.joinable() || dispatch_thread_.joinable();
  if (poll_thread_.joinable()) {
    poll_thread_.request_stop();
    poll_thread_.join();
  }
  if (dispatch_thread_.joinable()) {
    dispatch_thread_.request_stop();
    dispatch_thread_.join();
  }
  if (!was_running) return;
  try {
    poll_once();
    dispatch_once();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "progress bus: final flush failed: %s\n", e.what());
  }
}

void ProgressBus::publish(const ProgressEvent& event) { queue_->requeue({event}); }

std::size_t ProgressBus::poll_once() {
  auto events = poller_.poll();
  queue_->enqueue(events);
  return events.size();
}

DispatchReport ProgressBus::dispatch_once() {
  std::lock_guard lock(dispatch_mu_);
  DispatchReport report = dispatcher_.dispatch_batch();
  if (observer_ && report.drained > 0) observer_(report);
  return report;
}

void ProgressBus::set_dispatch_observer(std::function<void(const DispatchReport&)> observer) {
  std::lock_guard lock(dispatch_mu_);
  observer_ = std::move(observer);
}

}  // namespace iterforge
