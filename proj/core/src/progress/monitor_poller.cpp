#include "iterforge/progress/monitor_poller.hpp"

namespace iterforge {

namespace {

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    if (!out.empty()) out += '\n';
    out += l;
  }
  return out;
}

}  // namespace

void MonitorPoller::watch(const std::string& user_id, const std::string& task_id,
                          const std::filesystem::path& monitor_file) {
  std::lock_guard lock(mu_);
  Watch w;
  w.user_id = user_id;
  w.reader = std::make_unique<MonitorReader>(monitor_file, task_id);
  watches_[task_id] = std::move(w);
}

void MonitorPoller::unwatch(const std::string& task_id) {
  std::lock_guard lock(mu_);
  watches_.erase(task_id);
}

std::size_t MonitorPoller::watched() const {
  std::lock_guard lock(mu_);
  return watches_.size();
}

std::size_t MonitorPoller::warnings() const {
  std::lock_guard lock(mu_);
  return warnings_;
}

std::vector<ProgressEvent> MonitorPoller::poll() {
  std::lock_guard lock(mu_);
  std::vector<ProgressEvent> events;
  for (auto& [task_id, w] : watches_) {
    std::size_t before = w.reader->read_errors();
    MonitorRecord rec = w.reader->read();
    std::size_t seen = w.reader->read_errors() + w.reader->parse_warnings();
    warnings_ += seen - w.warnings_seen;
    w.warnings_seen = seen;
    if (w.reader->read_errors() != before) continue;
    if (!w.reader->saw_file() || rec.timestamp_ms == 0) continue;
    if (w.last_emitted && w.last_emitted->timestamp_ms == rec.timestamp_ms &&
        w.last_emitted->progress == rec.progress && w.last_emitted->state == rec.state) {
      continue;
    }
    ProgressEvent e;
    e.user_id = w.user_id;
    e.task_id = task_id;
    e.progress = rec.progress;
    e.state_code = static_cast<int>(rec.state);
    e.timestamp_ms = rec.timestamp_ms;
    if (rec.state == MonitorState::kError) {
      e.error_message = join_lines(rec.messages);
    } else {
      e.state_message = join_lines(rec.messages);
    }
    w.last_emitted = rec;
    events.push_back(std::move(e));
  }
  return events;
}

}  // namespace iterforge
