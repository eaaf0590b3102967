#include "iterforge/assets/model_store.hpp"

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/time.hpp"

namespace iterforge {

namespace fs = std::filesystem;

nlohmann::json ModelRecord::to_json() const {
  nlohmann::json j{{"model_id", id.value},
                   {"task_id", task_id},
                   {"executor", executor},
                   {"training_snapshot", training_snapshot},
                   {"created_ms", created_ms},
                   {"files", files}};
  j["accuracy"] = accuracy ? nlohmann::json(*accuracy) : nlohmann::json(nullptr);
  return j;
}

ModelRecord ModelRecord::from_json(const nlohmann::json& j) {
  ModelRecord r;
  r.id.value = j.at("model_id").get<std::string>();
  r.task_id = j.value("task_id", "");
  r.executor = j.value("executor", "");
  r.training_snapshot = j.value("training_snapshot", "");
  r.created_ms = j.value("created_ms", std::int64_t{0});
  r.files = j.value("files", std::vector<std::string>{});
  if (j.contains("accuracy") && j["accuracy"].is_number()) r.accuracy = j["accuracy"].get<double>();
  return r;
}

ModelStore::ModelStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create model root " + root_.string());
  for (const auto& de : fs::directory_iterator(root_)) {
    fs::path meta = de.path() / "meta.json";
    if (!de.is_directory() || !fs::exists(meta)) continue;
    try {
      auto rec = ModelRecord::from_json(nlohmann::json::parse(read_file(meta)));
      ids_.observe(rec.id.value);
      models_.emplace(rec.id, std::move(rec));
    } catch (const std::exception&) {
      // A model directory without valid metadata was never registered.
    }
  }
}

ModelId ModelStore::register_model(const fs::path& source_dir, std::string task_id,
                                   std::string executor, std::optional<double> accuracy,
                                   std::string training_snapshot) {
  if (!fs::is_directory(source_dir)) {
    throw Error(ErrorCode::kNotFound, "model source missing: " + source_dir.string());
  }
  ModelRecord rec;
  rec.id.value = ids_.next();
  rec.task_id = std::move(task_id);
  rec.executor = std::move(executor);
  rec.accuracy = accuracy;
  rec.training_snapshot = std::move(training_snapshot);
  rec.created_ms = now_ms();
  fs::path dir = root_ / rec.id.value;
  fs::path files_dir = dir / "files";
  copy_tree(source_dir, files_dir);
  for (const auto& de : fs::recursive_directory_iterator(files_dir)) {
    if (de.is_regular_file()) rec.files.push_back(fs::relative(de.path(), files_dir).string());
  }
  std::sort(rec.files.begin(), rec.files.end());
  // meta.json is written last; its presence marks the model as registered.
  write_file_atomic(dir / "meta.json", rec.to_json().dump(2));
  std::lock_guard lock(mu_);
  ModelId id = rec.id;
  models_.emplace(id, std::move(rec));
  return id;
}

ModelRecord ModelStore::get(const ModelId& id) const {
  std::lock_guard lock(mu_);
  auto it = models_.find(id);
  if (it == models_.end()) throw Error(ErrorCode::kNotFound, "unknown model " + id.value);
  return it->second;
}

bool ModelStore::contains(const ModelId& id) const {
  std::lock_guard lock(mu_);
  return models_.contains(id);
}

fs::path ModelStore::directory(const ModelId& id) const {
  get(id);
  return root_ / id.value / "files";
}

std::vector<ModelRecord> ModelStore::list() const {
  std::lock_guard lock(mu_);
  std::vector<ModelRecord> out;
  for (const auto& [id, rec] : models_) out.push_back(rec);
  return out;
}

}  // namespace iterforge
