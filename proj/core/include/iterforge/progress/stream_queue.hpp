#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <stop_token>
#include <vector>

#include "iterforge/progress/event.hpp"

namespace iterforge {

struct QueueEntry {
  std::uint64_t seq = 0;
  ProgressEvent event;
};

// Durable single-consumer event log. Entries are appended as JSON lines and
// stay until acknowledged; acknowledged prefixes are compacted away. With
// an empty path the queue lives in memory only.
class StreamQueue {
 public:
  explicit StreamQueue(std::filesystem::path file = {}, std::size_t capacity = 100000);
  ~StreamQueue();
  StreamQueue(const StreamQueue&) = delete;
  StreamQueue& operator=(const StreamQueue&) = delete;

  // Appends in order. Blocks while the queue is at capacity; returns false
  // if |stop| fires first (nothing is appended then).
  bool enqueue(const std::vector<ProgressEvent>& batch, std::stop_token stop = {});
  // Non-blocking variant; throws Error(kResourceExhausted) when full.
  void try_enqueue(const std::vector<ProgressEvent>& batch);

  // Writes back events the dispatcher could not deliver. Ignores the
  // capacity bound since the originals are acknowledged right after.
  void requeue(const std::vector<ProgressEvent>& batch);

  // All pending entries in arrival order.
  std::vector<QueueEntry> pending() const;
  void ack(const std::vector<std::uint64_t>& seqs);

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

 private:
  void load();
  void append_line_locked(const std::string& line);
  void compact_locked();
  void write_locked(const std::vector<ProgressEvent>& batch);

  std::filesystem::path file_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable_any space_cv_;
  std::map<std::uint64_t, ProgressEvent> entries_;
  std::uint64_t next_seq_ = 1;
  std::FILE* out_ = nullptr;
  std::size_t acked_lines_ = 0;
};

}  // namespace iterforge
