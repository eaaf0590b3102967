#include "iterforge/toy/model.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "iterforge/common/error.hpp"

namespace iterforge::toy {

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Nearest CentroidModel::nearest(std::span<const double> x) const {
  Nearest n;
  n.best_distance = std::numeric_limits<double>::infinity();
  n.second_distance = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (!centroids[c]) continue;
    double d = euclidean(x, *centroids[c]);
    if (d < n.best_distance) {
      n.second = n.best;
      n.second_distance = n.best_distance;
      n.best = static_cast<int>(c);
      n.best_distance = d;
    } else if (d < n.second_distance) {
      n.second = static_cast<int>(c);
      n.second_distance = d;
    }
  }
  return n;
}

std::string CentroidModel::serialize() const {
  std::string out = "toy-centroid-model 1\n";
  out += "classes " + std::to_string(centroids.size()) + "\n";
  out += "dim " + std::to_string(dim) + "\n";
  out += "digest " + (training_digest.empty() ? std::string("-") : training_digest) + "\n";
  char buf[64];
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    out += "centroid " + std::to_string(c);
    if (!centroids[c]) {
      out += " none\n";
      continue;
    }
    for (double v : *centroids[c]) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

CentroidModel CentroidModel::parse(std::string_view text) {
  auto bad = [](const std::string& why) {
    return Error(ErrorCode::kInvalidArgument, "model file: " + why);
  };
  std::istringstream in{std::string(text)};
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "toy-centroid-model" || version != 1) {
    throw bad("bad header");
  }
  CentroidModel m;
  std::size_t classes = 0;
  if (!(in >> word >> classes) || word != "classes") throw bad("missing classes");
  if (!(in >> word >> m.dim) || word != "dim") throw bad("missing dim");
  if (!(in >> word >> m.training_digest) || word != "digest") throw bad("missing digest");
  if (m.training_digest == "-") m.training_digest.clear();
  m.centroids.resize(classes);
  std::string line;
  std::getline(in, line);
  for (std::size_t c = 0; c < classes; ++c) {
    if (!std::getline(in, line)) throw bad("missing centroid " + std::to_string(c));
    std::istringstream ls(line);
    std::size_t index = 0;
    if (!(ls >> word >> index) || word != "centroid" || index != c) throw bad("bad centroid line");
    std::string first;
    if (!(ls >> first)) throw bad("empty centroid");
    if (first == "none") continue;
    std::vector<double> v;
    v.push_back(std::stod(first));
    double x;
    while (ls >> x) v.push_back(x);
    if (v.size() != m.dim) throw bad("centroid dimension mismatch");
    m.centroids[c] = std::move(v);
  }
  return m;
}

}  // namespace iterforge::toy
