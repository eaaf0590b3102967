#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "iterforge/progress/event.hpp"

namespace iterforge {

class PushChannel {
 public:
  virtual ~PushChannel() = default;
  // Throws on delivery failure.
  virtual void push(const ProgressEvent& event) = 0;
};

// One live connection's inbox. Frames are pushed by the hub and drained by
// the connection owner.
class Subscription {
 public:
  explicit Subscription(std::string user_id, std::size_t limit = 10000)
      : user_id_(std::move(user_id)), limit_(limit) {}

  const std::string& user_id() const { return user_id_; }
  // Returns false when the inbox overflowed (the subscriber is too slow).
  bool offer(std::string frame);
  std::optional<std::string> next(std::chrono::milliseconds timeout);
  void close();
  bool closed() const;

 private:
  std::string user_id_;
  std::size_t limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> frames_;
  bool closed_ = false;
};

// Routes each event only to subscriptions of the event's user.
class PushHub : public PushChannel {
 public:
  std::shared_ptr<Subscription> subscribe(const std::string& user_id);
  void unsubscribe(const std::shared_ptr<Subscription>& subscription);
  void push(const ProgressEvent& event) override;
  std::size_t subscriber_count(const std::string& user_id) const;
  void close_all();

 private:
  mutable std::mutex mu_;
  std::multimap<std::string, std::shared_ptr<Subscription>> subs_;
};

}  // namespace iterforge
