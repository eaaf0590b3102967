#include "iterforge/progress/status_store.hpp"

#include "iterforge/common/error.hpp"

namespace iterforge {

void MemoryStatusStore::put(const ProgressEvent& event) {
  std::lock_guard lock(mu_);
  latest_[event.task_id] = event;
}

std::optional<ProgressEvent> MemoryStatusStore::get(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  auto it = latest_.find(task_id);
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

SqliteStatusStore::SqliteStatusStore(std::shared_ptr<Database> db) : db_(std::move(db)) {
  db_->exec(
      "CREATE TABLE IF NOT EXISTS task_status ("
      " task_id TEXT PRIMARY KEY,"
      " body TEXT NOT NULL)");
}

void SqliteStatusStore::put(const ProgressEvent& event) {
  db_->query("INSERT INTO task_status(task_id, body) VALUES(?1, ?2) "
             "ON CONFLICT(task_id) DO UPDATE SET body=excluded.body",
             {event.task_id, event.to_json().dump()});
}

std::optional<ProgressEvent> SqliteStatusStore::get(const std::string& task_id) const {
  std::optional<ProgressEvent> out;
  db_->query("SELECT body FROM task_status WHERE task_id = ?1", {task_id},
             [&](const Database::Row& row) {
               out = ProgressEvent::from_json(nlohmann::json::parse(*row[0]));
             });
  return out;
}

FlakyStatusStore::FlakyStatusStore(std::shared_ptr<StatusStore> inner, double failure_rate,
                                   std::uint64_t seed)
    : inner_(std::move(inner)), rate_(failure_rate), rng_(seed) {}

void FlakyStatusStore::put(const ProgressEvent& event) {
  bool fail;
  {
    std::lock_guard lock(mu_);
    fail = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < rate_;
  }
  if (fail) {
    ++failures_;
    throw Error(ErrorCode::kIo, "injected persist failure");
  }
  inner_->put(event);
}

std::optional<ProgressEvent> FlakyStatusStore::get(const std::string& task_id) const {
  return inner_->get(task_id);
}

}  // namespace iterforge
