#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "iterforge/common/database.hpp"
#include "iterforge/progress/event.hpp"

namespace iterforge {

// Latest persisted status per task.
class StatusStore {
 public:
  virtual ~StatusStore() = default;
  virtual void put(const ProgressEvent& event) = 0;
  virtual std::optional<ProgressEvent> get(const std::string& task_id) const = 0;
};

class MemoryStatusStore : public StatusStore {
 public:
  void put(const ProgressEvent& event) override;
  std::optional<ProgressEvent> get(const std::string& task_id) const override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ProgressEvent> latest_;
};

class SqliteStatusStore : public StatusStore {
 public:
  explicit SqliteStatusStore(std::shared_ptr<Database> db);
  void put(const ProgressEvent& event) override;
  std::optional<ProgressEvent> get(const std::string& task_id) const override;

 private:
  std::shared_ptr<Database> db_;
};

// Wraps a store and fails a seeded fraction of writes with Error(kIo).
class FlakyStatusStore : public StatusStore {
 public:
  FlakyStatusStore(std::shared_ptr<StatusStore> inner, double failure_rate, std::uint64_t seed);
  void put(const ProgressEvent& event) override;
  std::optional<ProgressEvent> get(const std::string& task_id) const override;
  std::size_t failures() const { return failures_; }

 private:
  std::shared_ptr<StatusStore> inner_;
  double rate_;
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::atomic<std::size_t> failures_{0};
};

}  // namespace iterforge
