#include "iterforge/progress/push_hub.hpp"

namespace iterforge {

bool Subscription::offer(std::string frame) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return true;
    if (frames_.size() >= limit_) {
      closed_ = true;
      cv_.notify_all();
      return false;
    }
    frames_.push_back(std::move(frame));
  }
  cv_.notify_one();
  return true;
}

std::optional<std::string> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || closed_; });
  if (frames_.empty()) return std::nullopt;
  std::string frame = std::move(frames_.front());
  frames_.pop_front();
  return frame;
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool Subscription::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::shared_ptr<Subscription> PushHub::subscribe(const std::string& user_id) {
  auto sub = std::make_shared<Subscription>(user_id);
  std::lock_guard lock(mu_);
  subs_.emplace(user_id, sub);
  return sub;
}

void PushHub::unsubscribe(const std::shared_ptr<Subscription>& subscription) {
  std::lock_guard lock(mu_);
  auto [lo, hi] = subs_.equal_range(subscription->user_id());
  for (auto it = lo; it != hi; ++it) {
    if (it->second == subscription) {
      subs_.erase(it);
      break;
    }
  }
}

void PushHub::push(const ProgressEvent& event) {
  std::string frame = event.to_json().dump();
  std::lock_guard lock(mu_);
  auto [lo, hi] = subs_.equal_range(event.user_id);
  for (auto it = lo; it != hi; ++it) it->second->offer(frame);
}

std::size_t PushHub::subscriber_count(const std::string& user_id) const {
  std::lock_guard lock(mu_);
  return subs_.count(user_id);
}

void PushHub::close_all() {
  std::lock_guard lock(mu_);
  for (auto& [user, sub] : subs_) sub->close();
}

}  // namespace iterforge
