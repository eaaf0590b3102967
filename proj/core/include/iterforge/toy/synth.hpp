#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iterforge::toy {

// Seeded 2-class feature data: x ~ N(0, diag(scale^2)) and class 1 iff
// w . x + bias > 0.
struct SynthSpec {
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  std::vector<double> scales = {2.0, 1.5, 1, 1, 1, 1, 1, 1};
  std::vector<double> weights = std::vector<double>(8, 1.0);
  double bias = 0.0;
};

struct SynthSample {
  std::vector<double> features;
  int label = 0;
};

std::vector<SynthSample> generate_samples(const SynthSpec& spec);
int linear_label(const std::vector<double>& features, const std::vector<double>& weights,
                 double bias);

// Writes <prefix>_<nnnnnn>.vec payload files into |dir|. With |with_labels| each
// payload gets a sibling .txt holding "class 0.5 0.5 1 1", the
// whole-item box in yolo-txt form.
void write_samples(const std::filesystem::path& dir, const std::vector<SynthSample>& samples,
                   bool with_labels, const std::string& prefix = "sample");

}  // namespace iterforge::toy
