#include "iterforge/labeling/gateway.hpp"

#include <limits>
#include <set>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/time.hpp"

namespace iterforge {

namespace fs = std::filesystem;

nlohmann::json LabelTaskRecord::to_json() const {
  nlohmann::json j = {
      {"label_task_id", label_task_id},
      {"dataset", request.dataset.value},
      {"classes", request.classes},
      {"instructions", request.instructions},
      {"doc_url", request.doc_url ? nlohmann::json(*request.doc_url) : nlohmann::json()},
      {"pre_annotation_model", request.pre_annotation_model
                                   ? nlohmann::json(request.pre_annotation_model->value)
                                   : nlohmann::json()},
      {"user_id", request.user_id},
      {"state", to_string(state)},
      {"progress", progress},
      {"stale", stale},
      {"retryable", retryable},
      {"error", error},
      {"backend_task_id", backend_task_id},
      {"items", items},
      {"pre_annotated", pre_annotated},
      {"unknown_dropped", unknown_dropped},
      {"result_snapshot", result_snapshot ? nlohmann::json(result_snapshot->value) : nlohmann::json()},
      {"created_ms", created_ms},
      {"updated_ms", updated_ms},
  };
  return j;
}

LabelTaskRecord LabelTaskRecord::from_json(const nlohmann::json& j) {
  LabelTaskRecord r;
  r.label_task_id = j.at("label_task_id").get<std::string>();
  r.request.dataset = SnapshotId{j.at("dataset").get<std::string>()};
  r.request.classes = j.at("classes").get<std::vector<std::string>>();
  r.request.instructions = j.value("instructions", "");
  if (j.contains("doc_url") && j["doc_url"].is_string()) r.request.doc_url = j["doc_url"].get<std::string>();
  if (j.contains("pre_annotation_model") && j["pre_annotation_model"].is_string()) {
    r.request.pre_annotation_model = ModelId{j["pre_annotation_model"].get<std::string>()};
  }
  r.request.user_id = j.value("user_id", "u1");
  r.state = parse_label_state(j.at("state").get<std::string>());
  r.progress = j.value("progress", 0.0);
  r.stale = j.value("stale", false);
  r.retryable = j.value("retryable", false);
  r.error = j.value("error", "");
  r.backend_task_id = j.value("backend_task_id", "");
  r.items = j.value("items", std::size_t{0});
  r.pre_annotated = j.value("pre_annotated", std::size_t{0});
  r.unknown_dropped = j.value("unknown_dropped", std::size_t{0});
  if (j.contains("result_snapshot") && j["result_snapshot"].is_string()) {
    r.result_snapshot = SnapshotId{j["result_snapshot"].get<std::string>()};
  }
  r.created_ms = j.value("created_ms", std::int64_t{0});
  r.updated_ms = j.value("updated_ms", std::int64_t{0});
  return r;
}

LabelingGateway::LabelingGateway(AssetStore& assets, std::shared_ptr<LabelBackend> backend,
                                 fs::path state_dir, PreAnnotator pre_annotator)
    : assets_(assets),
      backend_(std::move(backend)),
      state_dir_(std::move(state_dir)),
      pre_annotator_(std::move(pre_annotator)) {
  if (state_dir_.empty()) return;
  fs::create_directories(state_dir_);
  for (const auto& de : fs::directory_iterator(state_dir_)) {
    if (de.path().extension() != ".json") continue;
    auto r = LabelTaskRecord::from_json(nlohmann::json::parse(read_file(de.path())));
    ids_.observe(r.label_task_id);
    records_[r.label_task_id] = std::move(r);
  }
}

std::string LabelingGateway::reserve_id() { return ids_.next(); }

void LabelingGateway::save(const LabelTaskRecord& record) {
  {
    std::lock_guard lock(mu_);
    records_[record.label_task_id] = record;
  }
  if (!state_dir_.empty()) {
    write_file_atomic(state_dir_ / (record.label_task_id + ".json"), record.to_json().dump(2));
  }
}

void LabelingGateway::register_with_backend(LabelTaskRecord& record) {
  SnapshotPtr snap = assets_.snapshot(record.request.dataset);
  std::map<std::string, Annotations> initial;
  if (record.request.pre_annotation_model) {
    if (!pre_annotator_) {
      throw Error(ErrorCode::kFailedPrecondition, "pre-annotation is not available");
    }
    initial = pre_annotator_(record.request.dataset, *record.request.pre_annotation_model);
  }
  LabelJob job;
  job.classes = record.request.classes;
  job.instructions = record.request.instructions;
  job.doc_url = record.request.doc_url;
  record.pre_annotated = 0;
  for (const auto& id : snap->index().ids()) {
    LabelItem item{id.hex(), {}};
    if (auto it = initial.find(id.hex()); it != initial.end() && !it->second.empty()) {
      item.objects = it->second;
      ++record.pre_annotated;
    }
    job.items.push_back(std::move(item));
  }
  record.items = job.items.size();
  try {
    record.backend_task_id = backend_->create(job);
    record.state = LabelState::kCreated;
    record.retryable = false;
    record.error.clear();
  } catch (const std::exception& e) {
    record.state = LabelState::kFailed;
    record.retryable = true;
    record.error = std::string("labeling backend unreachable: ") + e.what();
  }
  record.updated_ms = now_ms();
}

LabelTaskRecord LabelingGateway::create(const LabelTaskRequest& request, std::string label_task_id) {
  SnapshotPtr snap = assets_.snapshot(request.dataset);
  if (snap->empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset " + request.dataset.value + " is empty");
  }
  if (request.classes.empty()) throw Error(ErrorCode::kInvalidArgument, "class list is empty");
  std::set<std::string> unique(request.classes.begin(), request.classes.end());
  if (unique.size() != request.classes.size() || unique.contains("")) {
    throw Error(ErrorCode::kInvalidArgument, "class names must be unique and non-empty");
  }
  if (label_task_id.empty()) label_task_id = reserve_id();
  ids_.observe(label_task_id);
  if (contains(label_task_id)) {
    throw Error(ErrorCode::kAlreadyExists, "label task " + label_task_id + " exists");
  }
  LabelTaskRecord record;
  record.label_task_id = label_task_id;
  record.request = request;
  record.created_ms = now_ms();
  register_with_backend(record);
  save(record);
  return record;
}

LabelTaskRecord LabelingGateway::retry(const std::string& label_task_id) {
  LabelTaskRecord record = get(label_task_id);
  if (record.state != LabelState::kFailed || !record.retryable) {
    throw Error(ErrorCode::kFailedPrecondition, "label task " + label_task_id + " is not retryable");
  }
  register_with_backend(record);
  save(record);
  return record;
}

LabelTaskRecord LabelingGateway::poll(const std::string& label_task_id) {
  LabelTaskRecord record = get(label_task_id);
  if (record.state == LabelState::kCompleted || record.state == LabelState::kFailed) return record;
  try {
    LabelStatus s = backend_->status(record.backend_task_id);
    record.progress = std::max(record.progress, std::clamp(s.progress, 0.0, 1.0));
    record.state = s.state;
    if (s.state == LabelState::kCompleted) record.progress = 1.0;
    if (s.state == LabelState::kFailed) record.error = "labeling backend reported failure";
    record.stale = false;
  } catch (const std::exception&) {
    record.stale = true;
    std::lock_guard lock(mu_);
    records_[label_task_id].stale = true;
    return record;
  }
  record.updated_ms = now_ms();
  save(record);
  return record;
}

SnapshotId LabelingGateway::collect(const std::string& label_task_id, UnknownLabelPolicy policy) {
  std::lock_guard collect_lock(collect_mu_);
  LabelTaskRecord record = get(label_task_id);
  if (record.result_snapshot) return *record.result_snapshot;
  if (record.state != LabelState::kCompleted) {
    throw Error(ErrorCode::kFailedPrecondition,
                "label task " + label_task_id + " is " + std::string(to_string(record.state)));
  }
  SnapshotPtr source = assets_.snapshot(record.request.dataset);
  std::vector<LabelResult> results = backend_->results(record.backend_task_id);

  std::vector<std::string> classes = record.request.classes;
  std::map<std::string, Annotations> by_asset;
  std::size_t dropped = 0;
  for (auto& r : results) {
    if (!AssetId::is_valid_hex(r.asset_id) || !source->contains(AssetId::from_hex(r.asset_id))) {
      continue;
    }
    Annotations kept;
    for (const auto& o : r.objects) {
      if (o.class_id >= classes.size()) {
        switch (policy) {
          case UnknownLabelPolicy::kIgnore:
            ++dropped;
            continue;
          case UnknownLabelPolicy::kAbort:
            throw Error(ErrorCode::kAborted, "result for " + r.asset_id + " references class " +
                                                 std::to_string(o.class_id));
          case UnknownLabelPolicy::kAdd:
            if (o.class_id == std::numeric_limits<std::uint32_t>::max()) {
              ++dropped;
              continue;
            }
            while (classes.size() <= o.class_id) {
              classes.push_back("class_" + std::to_string(classes.size()));
            }
            break;
        }
      }
      if (!(o.x_min <= o.x_max && o.y_min <= o.y_max)) {
        ++dropped;
        continue;
      }
      kept.push_back(o);
    }
    by_asset[r.asset_id] = std::move(kept);
  }

  std::vector<SnapshotEntry> entries;
  entries.reserve(source->size());
  for (const auto& id : source->index().ids()) {
    auto it = by_asset.find(id.hex());
    entries.push_back({id, it == by_asset.end() ? Annotations{} : it->second});
  }
  SnapshotId snap = assets_.commit_snapshot({source->id()}, std::move(entries), label_task_id, classes);
  record.result_snapshot = snap;
  record.unknown_dropped = dropped;
  record.updated_ms = now_ms();
  save(record);
  return snap;
}

LabelTaskRecord LabelingGateway::get(const std::string& label_task_id) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(label_task_id);
  if (it == records_.end()) throw Error(ErrorCode::kNotFound, "no label task " + label_task_id);
  return it->second;
}

bool LabelingGateway::contains(const std::string& label_task_id) const {
  std::lock_guard lock(mu_);
  return records_.contains(label_task_id);
}

std::vector<LabelTaskRecord> LabelingGateway::list() const {
  std::lock_guard lock(mu_);
  std::vector<LabelTaskRecord> out;
  for (const auto& [id, r] : records_) out.push_back(r);
  return out;
}

}  // namespace iterforge
