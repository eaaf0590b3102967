#include "iterforge/scheduler/task_repository.hpp"

namespace iterforge {

void MemoryTaskRepository::save(const TaskRecord& record) {
  std::lock_guard lock(mu_);
  records_[record.task_id] = record;
}

std::optional<TaskRecord> MemoryTaskRepository::load(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(task_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<TaskRecord> MemoryTaskRepository::list() const {
  std::lock_guard lock(mu_);
  std::vector<TaskRecord> out;
  for (const auto& [id, r] : records_) out.push_back(r);
  return out;
}

SqliteTaskRepository::SqliteTaskRepository(std::shared_ptr<Database> db) : db_(std::move(db)) {
  db_->exec(
      "CREATE TABLE IF NOT EXISTS tasks ("
      " task_id TEXT PRIMARY KEY,"
      " state TEXT NOT NULL,"
      " body TEXT NOT NULL)");
}

void SqliteTaskRepository::save(const TaskRecord& record) {
  db_->query("INSERT INTO tasks(task_id, state, body) VALUES(?1, ?2, ?3) "
             "ON CONFLICT(task_id) DO UPDATE SET state=excluded.state, body=excluded.body",
             {record.task_id, std::string(to_string(record.state)), record.to_json().dump()});
}

std::optional<TaskRecord> SqliteTaskRepository::load(const std::string& task_id) const {
  std::optional<TaskRecord> out;
  db_->query("SELECT body FROM tasks WHERE task_id = ?1", {task_id}, [&](const Database::Row& row) {
    out = TaskRecord::from_json(nlohmann::json::parse(*row[0]));
  });
  return out;
}

std::vector<TaskRecord> SqliteTaskRepository::list() const {
  std::vector<TaskRecord> out;
  db_->query("SELECT body FROM tasks ORDER BY task_id", {}, [&](const Database::Row& row) {
    out.push_back(TaskRecord::from_json(nlohmann::json::parse(*row[0])));
  });
  return out;
}

}  // namespace iterforge
