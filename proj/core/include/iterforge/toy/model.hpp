#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iterforge::toy {

struct Nearest {
  int best = -1;
  int second = -1;
  double best_distance = 0;
  double second_distance = 0;
};

// Nearest-centroid classifier. Classes without training data keep no
// centroid (or the pretrained one) and are skipped by nearest().
struct CentroidModel {
  std::size_t dim = 0;
  std::string training_digest;
  std::vector<std::optional<std::vector<double>>> centroids;  // one per class

  std::size_t class_count() const { return centroids.size(); }
  Nearest nearest(std::span<const double> x) const;

  std::string serialize() const;
  // Throws Error(kInvalidArgument) on malformed text.
  static CentroidModel parse(std::string_view text);
};

double euclidean(std::span<const double> a, std::span<const double> b);

}  // namespace iterforge::toy
