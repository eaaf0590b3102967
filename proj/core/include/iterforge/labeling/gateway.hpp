#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iterforge/assets/asset_store.hpp"
#include "iterforge/assets/importers.hpp"
#include "iterforge/common/ids.hpp"
#include "iterforge/labeling/backend.hpp"

namespace iterforge {

struct LabelTaskRequest {
  SnapshotId dataset;
  std::vector<std::string> classes;
  std::string instructions;
  std::optional<std::string> doc_url;
  std::optional<ModelId> pre_annotation_model;
  std::string user_id = "u1";
};

struct LabelTaskRecord {
  std::string label_task_id;
  LabelTaskRequest request;
  LabelState state = LabelState::kCreated;
  double progress = 0.0;
  bool stale = false;      // last poll could not reach the backend
  bool retryable = false;  // failed because the backend was unreachable
  std::string error;
  std::string backend_task_id;
  std::size_t items = 0;
  std::size_t pre_annotated = 0;
  std::size_t unknown_dropped = 0;
  std::optional<SnapshotId> result_snapshot;
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;

  nlohmann::json to_json() const;
  static LabelTaskRecord from_json(const nlohmann::json& j);
};

// Runs inference with |model| over |dataset| and returns the predicted
// annotations per asset (assets without predictions may be absent).
using PreAnnotator =
    std::function<std::map<std::string, Annotations>(const SnapshotId& dataset, const ModelId& model)>;

// Label tasks against a pluggable backend. Records persist as JSON files
// under |state_dir|.
class LabelingGateway {
 public:
  LabelingGateway(AssetStore& assets, std::shared_ptr<LabelBackend> backend,
                  std::filesystem::path state_dir, PreAnnotator pre_annotator = {});

  std::string reserve_id();

  // Throws Error(kNotFound) for a missing dataset and
  // Error(kInvalidArgument) for an empty dataset or class list. An
  // unreachable backend yields a failed, retryable record instead.
  LabelTaskRecord create(const LabelTaskRequest& request, std::string label_task_id = {});
  // Re-registers a failed retryable task with the backend.
  LabelTaskRecord retry(const std::string& label_task_id);

  // Refreshes progress. On backend errors returns the last known value
  // with stale set.
  LabelTaskRecord poll(const std::string& label_task_id);

  // Commits the results as a new snapshot whose parent is the labeled
  // dataset and whose provenance is the label task id. Assets without a
  // result get an empty annotation set. Throws Error(kFailedPrecondition)
  // unless the task is completed. Repeated calls return the same snapshot.
  SnapshotId collect(const std::string& label_task_id,
                     UnknownLabelPolicy policy = UnknownLabelPolicy::kIgnore);

  LabelTaskRecord get(const std::string& label_task_id) const;
  bool contains(const std::string& label_task_id) const;
  std::vector<LabelTaskRecord> list() const;

 private:
  void register_with_backend(LabelTaskRecord& record);
  void save(const LabelTaskRecord& record);

  AssetStore& assets_;
  std::shared_ptr<LabelBackend> backend_;
  std::filesystem::path state_dir_;
  PreAnnotator pre_annotator_;
  IdSequence ids_{"lt"};
  mutable std::mutex mu_;
  std::mutex collect_mu_;
  std::map<std::string, LabelTaskRecord> records_;
};

}  // namespace iterforge
