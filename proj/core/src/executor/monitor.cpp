#include "iterforge/executor/monitor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

namespace iterforge {

namespace fs = std::filesystem;

std::optional<MonitorRecord> parse_monitor(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
    }
  }
  if (lines.empty()) return std::nullopt;
  std::vector<std::string_view> fields;
  std::string_view head = lines.front();
  for (;;) {
    auto tab = head.find('\t');
    fields.push_back(head.substr(0, tab));
    if (tab == std::string_view::npos) break;
    head.remove_prefix(tab + 1);
  }
  if (fields.size() != 4 || fields[0].empty()) return std::nullopt;

  MonitorRecord rec;
  rec.task_id = std::string(fields[0]);
  auto ts = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), rec.timestamp_ms);
  if (ts.ec != std::errc() || ts.ptr != fields[1].data() + fields[1].size()) return std::nullopt;
  auto pr = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), rec.progress);
  if (pr.ec != std::errc() || pr.ptr != fields[2].data() + fields[2].size()) return std::nullopt;
  if (!std::isfinite(rec.progress) || rec.progress < 0.0 || rec.progress > 1.0) return std::nullopt;
  int code = 0;
  auto sc = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), code);
  if (sc.ec != std::errc() || sc.ptr != fields[3].data() + fields[3].size()) return std::nullopt;
  if (code < 1 || code > 4) return std::nullopt;
  rec.state = static_cast<MonitorState>(code);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (!lines[i].empty()) rec.messages.push_back(lines[i]);
  }
  return rec;
}

std::string format_monitor(const MonitorRecord& record) {
  char head[64];
  std::snprintf(head, sizeof(head), "\t%lld\t%.6f\t%d\n",
                static_cast<long long>(record.timestamp_ms), record.progress,
                static_cast<int>(record.state));
  std::string out = record.task_id + head;
  for (const auto& m : record.messages) out += m + "\n";
  return out;
}

void write_monitor_atomic(const fs::path& file, const MonitorRecord& record) {
  write_file_atomic(file, format_monitor(record));
}

MonitorReader::MonitorReader(fs::path file, std::string task_id)
    : file_(std::move(file)), task_id_(std::move(task_id)) {}

MonitorRecord MonitorReader::read() {
  MonitorRecord synthetic{task_id_, 0, 0.0, MonitorState::kPending, {}};
  std::error_code ec;
  saw_file_ = fs::exists(file_, ec);
  if (saw_file_) {
    try {
      if (auto rec = parse_monitor(read_file(file_))) {
        last_good_ = std::move(*rec);
      } else {
        ++warnings_;
      }
    } catch (const Error&) {
      ++read_errors_;
    }
  }
  MonitorRecord out = last_good_.value_or(synthetic);
  out.progress = std::max(out.progress, high_water_);
  if (out.state == MonitorState::kDone) out.progress = 1.0;
  high_water_ = out.progress;
  return out;
}

}  // namespace iterforge
