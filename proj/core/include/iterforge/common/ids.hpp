#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

namespace iterforge {

// Generates "<prefix>-000001" style ids. Resumable from the highest id seen
// so that ids stay unique across restarts.
class IdSequence {
 public:
  explicit IdSequence(std::string prefix) : prefix_(std::move(prefix)) {}

  std::string next();
  // Raises the counter past |id| if it carries this sequence's prefix.
  void observe(std::string_view id);
  std::uint64_t current() const { return counter_.load(); }

 private:
  std::string prefix_;
  std::atomic<std::uint64_t> counter_{0};
};

}  // namespace iterforge
