#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterforge/assets/types.hpp"
#include "iterforge/common/ids.hpp"

namespace iterforge {

struct ModelRecord {
  ModelId id;
  std::string task_id;
  std::string executor;  // "name@version"
  std::optional<double> accuracy;
  std::string training_snapshot;
  std::int64_t created_ms = 0;
  std::vector<std::string> files;  // relative to the model directory

  nlohmann::json to_json() const;
  static ModelRecord from_json(const nlohmann::json& j);
  friend bool operator==(const ModelRecord&, const ModelRecord&) = default;
};

// Trained model files, one directory per model under <root>/<model id>/,
// with the record kept beside them in meta.json.
class ModelStore {
 public:
  explicit ModelStore(std::filesystem::path root);

  // Copies every regular file under |source_dir| into a new model directory.
  ModelId register_model(const std::filesystem::path& source_dir, std::string task_id,
                         std::string executor, std::optional<double> accuracy,
                         std::string training_snapshot);

  // Throws Error(kNotFound).
  ModelRecord get(const ModelId& id) const;
  bool contains(const ModelId& id) const;
  std::filesystem::path directory(const ModelId& id) const;
  std::vector<ModelRecord> list() const;

 private:
  std::filesystem::path root_;
  IdSequence ids_{"m"};
  mutable std::mutex mu_;
  std::map<ModelId, ModelRecord> models_;
};

}  // namespace iterforge
