#include "iterforge/toy/payload.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace iterforge::toy {

std::optional<std::vector<double>> parse_payload(std::string_view text, std::size_t dim) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return std::nullopt;
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    std::string_view field = text.substr(pos, comma - pos);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() ||
        !std::isfinite(v)) {
      return std::nullopt;
    }
    values.push_back(v);
    pos = comma + 1;
  }
  if (dim != 0 && values.size() != dim) return std::nullopt;
  return values;
}

std::string format_payload(std::span<const double> values) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    std::snprintf(buf, sizeof buf, "%.6f", values[i]);
    out += buf;
  }
  return out;
}

}  // namespace iterforge::toy
