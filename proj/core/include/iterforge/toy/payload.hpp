#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iterforge::toy {

// Feature vector stored as an asset: comma-separated decimal numbers.
// Returns nullopt unless the text holds finite numbers only, and exactly
// |dim| of them when |dim| is non-zero.
std::optional<std::vector<double>> parse_payload(std::string_view text, std::size_t dim = 0);
std::string format_payload(std::span<const double> values);

}  // namespace iterforge::toy
