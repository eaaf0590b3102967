#include "iterforge/progress/stream_queue.hpp"

#include <sstream>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

namespace iterforge {

namespace fs = std::filesystem;

namespace {
constexpr std::size_t kCompactAfter = 4096;
}

StreamQueue::StreamQueue(fs::path file, std::size_t capacity)
    : file_(std::move(file)), capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::kInvalidArgument, "queue capacity must be > 0");
  if (file_.empty()) return;
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
  load();
  std::lock_guard lock(mu_);
  compact_locked();
}

StreamQueue::~StreamQueue() {
  if (out_) std::fclose(out_);
}

void StreamQueue::load() {
  if (!fs::exists(file_)) return;
  std::istringstream in(read_file(file_));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      break;  // torn tail
    }
    if (j.contains("a")) {
      auto seq = j["a"].get<std::uint64_t>();
      entries_[seq] = ProgressEvent::from_json(j["e"]);
      next_seq_ = std::max(next_seq_, seq + 1);
    } else if (j.contains("k")) {
      for (auto seq : j["k"]) entries_.erase(seq.get<std::uint64_t>());
    }
  }
}

void StreamQueue::compact_locked() {
  if (file_.empty()) return;
  if (out_) {
    std::fclose(out_);
    out_ = nullptr;
  }
  std::string body;
  for (const auto& [seq, e] : entries_) {
    body += nlohmann::json{{"a", seq}, {"e", e.to_json()}}.dump();
    body += '\n';
  }
  write_file_atomic(file_, body);
  out_ = std::fopen(file_.c_str(), "ab");
  if (!out_) throw Error(ErrorCode::kIo, "cannot open queue file " + file_.string());
  acked_lines_ = 0;
}

void StreamQueue::append_line_locked(const std::string& line) {
  if (!out_) return;
  if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() || std::fflush(out_) != 0) {
    throw Error(ErrorCode::kIo, "queue append failed");
  }
}

void StreamQueue::write_locked(const std::vector<ProgressEvent>& batch) {
  std::string lines;
  std::uint64_t seq = next_seq_;
  for (const auto& e : batch) {
    lines += nlohmann::json{{"a", seq++}, {"e", e.to_json()}}.dump();
    lines += '\n';
  }
  append_line_locked(lines);
  for (const auto& e : batch) entries_[next_seq_++] = e;
}

bool StreamQueue::enqueue(const std::vector<ProgressEvent>& batch, std::stop_token stop) {
  if (batch.empty()) return true;
  std::unique_lock lock(mu_);
  bool ok = space_cv_.wait(lock, stop, [&] {
    return entries_.empty() || entries_.size() + batch.size() <= capacity_;
  });
  if (!ok) return false;
  write_locked(batch);
  return true;
}

void StreamQueue::try_enqueue(const std::vector<ProgressEvent>& batch) {
  if (batch.empty()) return;
  std::lock_guard lock(mu_);
  if (!entries_.empty() && entries_.size() + batch.size() > capacity_) {
    throw Error(ErrorCode::kResourceExhausted, "progress queue full");
  }
  write_locked(batch);
}

void StreamQueue::requeue(const std::vector<ProgressEvent>& batch) {
  if (batch.empty()) return;
  std::lock_guard lock(mu_);
  write_locked(batch);
}

std::vector<QueueEntry> StreamQueue::pending() const {
  std::lock_guard lock(mu_);
  std::vector<QueueEntry> out;
  out.reserve(entries_.size());
  for (const auto& [seq, e] : entries_) out.push_back({seq, e});
  return out;
}

void StreamQueue::ack(const std::vector<std::uint64_t>& seqs) {
  if (seqs.empty()) return;
  {
    std::lock_guard lock(mu_);
    append_line_locked(nlohmann::json{{"k", seqs}}.dump() + "\n");
    for (auto seq : seqs) entries_.erase(seq);
    acked_lines_ += seqs.size();
    if (entries_.empty() || acked_lines_ > kCompactAfter) compact_locked();
  }
  space_cv_.notify_all();
}

std::size_t StreamQueue::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace iterforge
