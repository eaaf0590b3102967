#include "iterforge/common/ids.hpp"

#include <charconv>

#include "iterforge/common/files.hpp"

namespace iterforge {

std::string IdSequence::next() {
  return prefix_ + "-" + zero_padded(++counter_, 6);
}

void IdSequence::observe(std::string_view id) {
  if (id.size() <= prefix_.size() + 1 || id.substr(0, prefix_.size()) != prefix_ ||
      id[prefix_.size()] != '-') {
    return;
  }
  std::string_view digits = id.substr(prefix_.size() + 1);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return;
  std::uint64_t cur = counter_.load();
  while (cur < value && !counter_.compare_exchange_weak(cur, value)) {
  }
}

}  // namespace iterforge
