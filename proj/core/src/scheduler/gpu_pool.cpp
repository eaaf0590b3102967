#include "iterforge/scheduler/gpu_pool.hpp"

#include <algorithm>

#include "iterforge/common/error.hpp"

namespace iterforge {

int PoolSnapshot::allocated() const {
  int n = 0;
  for (const auto& [task, ids] : allocations) n += static_cast<int>(ids.size());
  return n;
}

GpuPool::GpuPool(int capacity) : capacity_(capacity), used_(static_cast<std::size_t>(capacity)) {
  if (capacity < 1) throw Error(ErrorCode::kInvalidArgument, "gpu pool capacity must be >= 1");
}

std::optional<std::vector<int>> GpuPool::try_grant_locked(int n) {
  std::vector<int> ids;
  for (int i = 0; i < capacity_ && static_cast<int>(ids.size()) < n; ++i) {
    if (!used_[static_cast<std::size_t>(i)]) ids.push_back(i);
  }
  if (static_cast<int>(ids.size()) < n) return std::nullopt;
  for (int id : ids) used_[static_cast<std::size_t>(id)] = true;
  return ids;
}

std::optional<std::vector<int>> GpuPool::request(const std::string& task, int n) {
  std::lock_guard lock(mu_);
  if (n < 1 || n > capacity_) {
    throw Error(ErrorCode::kInvalidArgument,
                "gpu request of " + std::to_string(n) + " outside [1, " +
                    std::to_string(capacity_) + "]");
  }
  bool queued = std::any_of(queue_.begin(), queue_.end(),
                            [&](const auto& q) { return q.first == task; });
  if (allocations_.contains(task) || queued) {
    throw Error(ErrorCode::kAlreadyExists, "task " + task + " already holds or awaits gpus");
  }
  std::optional<std::vector<int>> ids;
  if (queue_.empty()) ids = try_grant_locked(n);
  if (ids) {
    allocations_[task] = *ids;
  } else {
    queue_.emplace_back(task, n);
  }
  notify_locked();
  return ids;
}

std::vector<GpuPool::Grant> GpuPool::drain_queue_locked() {
  std::vector<Grant> granted;
  while (!queue_.empty()) {
    auto ids = try_grant_locked(queue_.front().second);
    if (!ids) break;
    allocations_[queue_.front().first] = *ids;
    granted.emplace_back(queue_.front().first, std::move(*ids));
    queue_.pop_front();
  }
  return granted;
}

std::vector<GpuPool::Grant> GpuPool::release(const std::string& task) {
  std::lock_guard lock(mu_);
  auto it = allocations_.find(task);
  if (it == allocations_.end()) return {};
  for (int id : it->second) used_[static_cast<std::size_t>(id)] = false;
  allocations_.erase(it);
  auto granted = drain_queue_locked();
  notify_locked();
  return granted;
}

std::optional<std::vector<GpuPool::Grant>> GpuPool::cancel(const std::string& task) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(queue_.begin(), queue_.end(),
                         [&](const auto& q) { return q.first == task; });
  if (it == queue_.end()) return std::nullopt;
  queue_.erase(it);
  auto granted = drain_queue_locked();
  notify_locked();
  return granted;
}

void GpuPool::restore(const std::string& task, const std::vector<int>& ids) {
  std::lock_guard lock(mu_);
  if (allocations_.contains(task)) throw Error(ErrorCode::kAlreadyExists, "grant exists: " + task);
  for (int id : ids) {
    if (id < 0 || id >= capacity_ || used_[static_cast<std::size_t>(id)]) {
      throw Error(ErrorCode::kIntegrity, "cannot restore gpu " + std::to_string(id) + " for " + task);
    }
  }
  for (int id : ids) used_[static_cast<std::size_t>(id)] = true;
  allocations_[task] = ids;
  notify_locked();
}

PoolSnapshot GpuPool::snapshot() const {
  std::lock_guard lock(mu_);
  PoolSnapshot s;
  s.capacity = capacity_;
  s.allocations = allocations_;
  s.queue.assign(queue_.begin(), queue_.end());
  return s;
}

std::optional<std::vector<int>> GpuPool::grant_of(const std::string& task) const {
  std::lock_guard lock(mu_);
  auto it = allocations_.find(task);
  if (it == allocations_.end()) return std::nullopt;
  return it->second;
}

void GpuPool::set_observer(std::function<void(const PoolSnapshot&)> observer) {
  std::lock_guard lock(mu_);
  observer_ = std::move(observer);
}

void GpuPool::notify_locked() {
  if (!observer_) return;
  PoolSnapshot s;
  s.capacity = capacity_;
  s.allocations = allocations_;
  s.queue.assign(queue_.begin(), queue_.end());
  observer_(s);
}

}  // namespace iterforge
