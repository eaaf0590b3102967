#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace iterforge {

enum class ExecutorKind { kTrain, kMine, kInfer };

std::string_view to_string(ExecutorKind kind);
ExecutorKind parse_executor_kind(std::string_view text);

enum class ParamType { kInt, kFloat, kStr, kBool };

struct ParamSpec {
  std::string key;
  ParamType type = ParamType::kStr;
  nlohmann::json default_value;  // null when absent
  bool required = false;
};

// Metadata a plugin ships in its package's manifest.json:
//   {"name":..,"version":..,"kinds":["train",..],"description":..,
//    "params":[{"key":..,"type":"int|float|str|bool","default":..,"required":bool}],
//    "entry":[command, args..]}
struct ExecutorManifest {
  std::string name;
  std::string version;
  std::vector<ExecutorKind> kinds;
  std::vector<ParamSpec> params;
  std::string description;
  std::vector<std::string> entry;
  std::filesystem::path package_path;

  // Validates the invariants; throws Error(kInvalidArgument).
  static ExecutorManifest from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  bool supports(ExecutorKind kind) const;
  std::string key() const { return name + "@" + version; }

  // Applies defaults and type-checks |given| against the declared params.
  // Unknown keys pass through untouched.
  nlohmann::json resolve_params(const nlohmann::json& given) const;
};

// Reads <package>/manifest.json. Throws Error(kInvalidArgument) when the
// manifest is missing or invalid.
ExecutorManifest load_manifest(const std::filesystem::path& package);

// Registered executors, persisted as a JSON document at |registry_file|
// (empty path = in-memory only). Registration is serialized.
class ExecutorRegistry {
 public:
  explicit ExecutorRegistry(std::filesystem::path registry_file = {});

  // Throws Error(kAlreadyExists) for a duplicate (name, version).
  ExecutorManifest register_executor(const std::filesystem::path& package);
  void deregister(const std::string& name, const std::string& version);

  std::vector<ExecutorManifest> list() const;
  std::vector<ExecutorManifest> for_kind(ExecutorKind kind) const;
  // Latest registration of |name| (any version when |version| is empty).
  std::optional<ExecutorManifest> find(const std::string& name, const std::string& version = {}) const;
  // |name| may be empty (most recent executor supporting |kind|) or
  // "name" / "name@version". Throws Error(kNotFound).
  ExecutorManifest resolve(ExecutorKind kind, const std::string& name) const;

 private:
  void persist() const;

  std::filesystem::path file_;
  mutable std::mutex mu_;
  std::vector<ExecutorManifest> entries_;  // registration order
};

}  // namespace iterforge
