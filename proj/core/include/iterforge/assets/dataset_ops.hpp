#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "iterforge/assets/asset_store.hpp"

namespace iterforge {

enum class MergeStrategy { kPreferLeft, kPreferRight, kUnionAnnotations };

MergeStrategy parse_merge_strategy(std::string_view text);
std::string_view to_string(MergeStrategy strategy);

struct FilterSpec {
  std::optional<std::set<std::string>> include_classes;
  std::optional<std::set<std::string>> exclude_classes;
  bool labeled_only = false;
};

// Keeps assets carrying at least one included class (when an include set is
// given), strips excluded-class boxes and drops assets left with nothing
// but excluded boxes, then optionally drops unlabeled assets. Refuses
// identity filters with Error(kInvalidArgument).
SnapshotId filter(AssetStore& store, const SnapshotId& source, const FilterSpec& spec,
                  std::string provenance = "dataset-op");

// Asset-id union with parents [a, b]. Class lists must be equal or one a
// prefix of the other, unless |remap_classes| unions them and rewrites b's
// class ids.
SnapshotId merge(AssetStore& store, const SnapshotId& a, const SnapshotId& b,
                 MergeStrategy strategy, bool remap_classes = false,
                 std::string provenance = "dataset-op");

// Both keep the left operand's annotations and class list.
SnapshotId intersect(AssetStore& store, const SnapshotId& a, const SnapshotId& b,
                     std::string provenance = "dataset-op");
SnapshotId exclude(AssetStore& store, const SnapshotId& a, const SnapshotId& b,
                   std::string provenance = "dataset-op");

// Subset of |source| restricted to |ids| (in the given order), parent source.
SnapshotId select(AssetStore& store, const SnapshotId& source, const std::vector<AssetId>& ids,
                  std::string provenance);

// Runs the op described by an API request body:
//   {"op":"filter","snapshot":..,"include":[..],"exclude":[..],"labeled_only":bool}
//   {"op":"merge","a":..,"b":..,"strategy":"prefer-left|prefer-right|union-annotations","remap":bool}
//   {"op":"intersect"|"exclude","a":..,"b":..}
SnapshotId run_dataset_op(AssetStore& store, const nlohmann::json& request,
                          std::string provenance = "dataset-op");

}  // namespace iterforge
