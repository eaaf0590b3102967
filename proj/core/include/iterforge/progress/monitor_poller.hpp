#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "iterforge/executor/monitor.hpp"
#include "iterforge/progress/event.hpp"

namespace iterforge {

// Reads the monitor files of running executors and reports what changed
// since the previous poll.
class MonitorPoller {
 public:
  void watch(const std::string& user_id, const std::string& task_id,
             const std::filesystem::path& monitor_file);
  void unwatch(const std::string& task_id);
  std::size_t watched() const;

  // One event per task whose (timestamp, progress, state) moved. Absent
  // files produce nothing.
  std::vector<ProgressEvent> poll();
  std::size_t warnings() const;

 private:
  struct Watch {
    std::string user_id;
    std::unique_ptr<MonitorReader> reader;
    std::optional<MonitorRecord> last_emitted;
    std::size_t warnings_seen = 0;
  };
  mutable std::mutex mu_;
  std::map<std::string, Watch> watches_;
  std::size_t warnings_ = 0;
};

}  // namespace iterforge
