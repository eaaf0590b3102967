#pragma once

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace iterforge {

struct PoolSnapshot {
  int capacity = 0;
  std::map<std::string, std::vector<int>> allocations;
  std::vector<std::pair<std::string, int>> queue;  // FIFO order

  int allocated() const;
  int free() const { return capacity - allocated(); }
};

// Logical GPU ids [0, capacity). Grants are the lowest free ids; requests
// that do not fit wait in strict FIFO order.
class GpuPool {
 public:
  explicit GpuPool(int capacity);

  using Grant = std::pair<std::string, std::vector<int>>;

  // Returns the ids when granted now, nullopt when queued. Throws
  // Error(kInvalidArgument) for n outside [1, capacity] and
  // Error(kAlreadyExists) when |task| already holds or awaits a grant.
  std::optional<std::vector<int>> request(const std::string& task, int n);
  // Idempotent. Returns grants made to queued tasks, in FIFO order.
  std::vector<Grant> release(const std::string& task);
  // Drops a queued request and returns the grants that became possible,
  // or nullopt when |task| was not queued.
  std::optional<std::vector<Grant>> cancel(const std::string& task);
  // Re-installs a grant read back from persistent state.
  void restore(const std::string& task, const std::vector<int>& ids);

  int capacity() const { return capacity_; }
  PoolSnapshot snapshot() const;
  std::optional<std::vector<int>> grant_of(const std::string& task) const;

  // Called after every mutation with the resulting state.
  void set_observer(std::function<void(const PoolSnapshot&)> observer);

 private:
  std::optional<std::vector<int>> try_grant_locked(int n);
  std::vector<Grant> drain_queue_locked();
  void notify_locked();

  int capacity_;
  mutable std::mutex mu_;
  std::vector<bool> used_;
  std::map<std::string, std::vector<int>> allocations_;
  std::deque<std::pair<std::string, int>> queue_;
  std::function<void(const PoolSnapshot&)> observer_;
};

}  // namespace iterforge
