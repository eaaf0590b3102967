#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iterforge {

enum class MonitorState : int { kPending = 1, kRunning = 2, kDone = 3, kError = 4 };

// Contents of out/monitor.txt: one tab-separated status line
// "task_id\ttimestamp_ms\tprogress\tstate_code" and optional message lines.
struct MonitorRecord {
  std::string task_id;
  std::int64_t timestamp_ms = 0;
  double progress = 0.0;
  MonitorState state = MonitorState::kPending;
  std::vector<std::string> messages;

  friend bool operator==(const MonitorRecord&, const MonitorRecord&) = default;
};

std::optional<MonitorRecord> parse_monitor(std::string_view text);
std::string format_monitor(const MonitorRecord& record);

// Executor side: temp file + rename so that readers never see a torn line.
void write_monitor_atomic(const std::filesystem::path& file, const MonitorRecord& record);

// Platform side. Keeps the last good record, clamps progress so successive
// reads never go backwards and reports 1.0 once the executor says done.
class MonitorReader {
 public:
  MonitorReader(std::filesystem::path file, std::string task_id);

  MonitorRecord read();
  // True when the last read() found a file (as opposed to the synthetic
  // pending record).
  bool saw_file() const { return saw_file_; }
  std::size_t parse_warnings() const { return warnings_; }
  std::size_t read_errors() const { return read_errors_; }

 private:
  std::filesystem::path file_;
  std::string task_id_;
  std::optional<MonitorRecord> last_good_;
  double high_water_ = 0.0;
  bool saw_file_ = false;
  std::size_t warnings_ = 0;
  std::size_t read_errors_ = 0;
};

}  // namespace iterforge
