#pragma once

#include <stdlib.h>

#include <filesystem>
#include <string>
#include <vector>

#include "iterforge/assets/asset_store.hpp"

namespace iterforge::bench {

class ScratchDir {
 public:
  ScratchDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "iterforge-bench-XXXXXX").string();
    if (::mkdtemp(pattern.data())) path_ = pattern;
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline AnnotationObject whole_box(std::uint32_t cls) { return {cls, 0, 0, 1, 1}; }

// Puts |n| small assets and returns their ids.
inline std::vector<AssetId> fill(AssetStore& store, std::size_t n, const std::string& tag = "a") {
  std::vector<AssetId> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(store.put_asset(tag + std::to_string(i), "bench"));
  return ids;
}

// Every third asset unlabeled, the rest with one box of class i % classes.
inline std::vector<SnapshotEntry> entries(const std::vector<AssetId>& ids, std::uint32_t classes) {
  std::vector<SnapshotEntry> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Annotations ann;
    if (i % 3 != 0) ann.push_back(whole_box(static_cast<std::uint32_t>(i % classes)));
    out.push_back({ids[i], std::move(ann)});
  }
  return out;
}

}  // namespace iterforge::bench
