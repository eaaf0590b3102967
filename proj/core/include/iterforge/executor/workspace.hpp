#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterforge/assets/asset_store.hpp"
#include "iterforge/assets/model_store.hpp"
#include "iterforge/executor/manifest.hpp"

namespace iterforge {

// Exchange area of one executor instance:
//   in/config.json  in/class-names.txt  in/*-index.tsv
//   in/assets/<aa>/<id>  in/annotations/<id>.ann  in/models/
//   out/monitor.txt  out/log.txt  out/...
struct Workspace {
  std::filesystem::path root;
  ExecutorKind kind = ExecutorKind::kTrain;
  std::string task_id;

  std::filesystem::path in() const { return root / "in"; }
  std::filesystem::path out() const { return root / "out"; }
  std::filesystem::path monitor_file() const { return root / "out" / "monitor.txt"; }
  std::filesystem::path log_file() const { return root / "out" / "log.txt"; }
};

struct WorkspaceRequest {
  std::string task_id;
  ExecutorKind kind = ExecutorKind::kTrain;
  std::optional<SnapshotId> train;
  std::optional<SnapshotId> validation;
  std::optional<SnapshotId> candidates;
  std::optional<ModelId> model;
  nlohmann::json params = nlohmann::json::object();
  // Defaults to the class list of the train (or candidate) snapshot.
  std::vector<std::string> class_names;
};

// Populates |root|/in and creates an empty |root|/out. Throws
// Error(kNotFound) for missing snapshots or models and
// Error(kFailedPrecondition) when the kind's required inputs are absent or
// a candidate set is empty.
Workspace prepare_workspace(const AssetStore& assets, const ModelStore& models,
                            const std::filesystem::path& root, const WorkspaceRequest& request);

// Rewrites in/config.json with the granted GPU ids. Called right before
// launch, once the scheduler holds the grant.
void write_launch_config(const Workspace& ws, std::span<const int> gpu_ids);

// Index line "assets/<aa>/<id>\tannotations/<id>.ann" (second field empty
// when unlabeled).
std::string index_line(const AssetId& id, bool labeled);

struct IndexEntry {
  std::string asset_path;
  std::string annotation_path;  // empty when unlabeled
};
std::vector<IndexEntry> read_index(const std::filesystem::path& file);

// "class_id x_min y_min x_max y_max" per line.
std::string format_annotations(const Annotations& annotations);
Annotations parse_annotations(std::string_view text);

}  // namespace iterforge
