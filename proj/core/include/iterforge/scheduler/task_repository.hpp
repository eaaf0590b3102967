#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iterforge/common/database.hpp"
#include "iterforge/scheduler/task.hpp"

namespace iterforge {

class TaskRepository {
 public:
  virtual ~TaskRepository() = default;
  virtual void save(const TaskRecord& record) = 0;
  virtual std::optional<TaskRecord> load(const std::string& task_id) const = 0;
  virtual std::vector<TaskRecord> list() const = 0;
};

class MemoryTaskRepository : public TaskRepository {
 public:
  void save(const TaskRecord& record) override;
  std::optional<TaskRecord> load(const std::string& task_id) const override;
  std::vector<TaskRecord> list() const override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, TaskRecord> records_;
};

class SqliteTaskRepository : public TaskRepository {
 public:
  explicit SqliteTaskRepository(std::shared_ptr<Database> db);
  void save(const TaskRecord& record) override;
  std::optional<TaskRecord> load(const std::string& task_id) const override;
  std::vector<TaskRecord> list() const override;

 private:
  std::shared_ptr<Database> db_;
};

}  // namespace iterforge
