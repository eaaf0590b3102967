#include "iterforge/toy/synth.hpp"

#include <random>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/toy/payload.hpp"

namespace iterforge::toy {

int linear_label(const std::vector<double>& features, const std::vector<double>& weights,
                 double bias) {
  double s = bias;
  for (std::size_t i = 0; i < features.size() && i < weights.size(); ++i) {
    s += features[i] * weights[i];
  }
  return s > 0 ? 1 : 0;
}

std::vector<SynthSample> generate_samples(const SynthSpec& spec) {
  if (spec.scales.empty() || spec.weights.size() != spec.scales.size()) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic spec needs matching scales and weights");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SynthSample> out(spec.count);
  for (auto& s : out) {
    s.features.resize(spec.scales.size());
    for (std::size_t d = 0; d < spec.scales.size(); ++d) s.features[d] = normal(rng) * spec.scales[d];
    // Rounded the same way the payload stores it, so labels match the bytes.
    auto stored = parse_payload(format_payload(s.features));
    s.features = *stored;
    s.label = linear_label(s.features, spec.weights, spec.bias);
  }
  return out;
}

void write_samples(const std::filesystem::path& dir, const std::vector<SynthSample>& samples,
                   bool with_labels, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::string stem = prefix + "_" + zero_padded(i, 6);
    write_file(dir / (stem + ".vec"), format_payload(samples[i].features) + "\n");
    if (with_labels) {
      write_file(dir / (stem + ".txt"), std::to_string(samples[i].label) + " 0.5 0.5 1 1\n");
    }
  }
}

}  // namespace iterforge::toy
