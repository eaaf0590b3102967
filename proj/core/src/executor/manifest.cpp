#include "iterforge/executor/manifest.hpp"

#include <algorithm>
#include <set>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

namespace iterforge {

namespace fs = std::filesystem;

std::string_view to_string(ExecutorKind kind) {
  switch (kind) {
    case ExecutorKind::kTrain: return "train";
    case ExecutorKind::kMine: return "mine";
    case ExecutorKind::kInfer: return "infer";
  }
  return "train";
}

ExecutorKind parse_executor_kind(std::string_view text) {
  if (text == "train") return ExecutorKind::kTrain;
  if (text == "mine") return ExecutorKind::kMine;
  if (text == "infer") return ExecutorKind::kInfer;
  throw Error(ErrorCode::kInvalidArgument, "unknown executor kind: " + std::string(text));
}

namespace {

ParamType parse_param_type(std::string_view t) {
  if (t == "int") return ParamType::kInt;
  if (t == "float") return ParamType::kFloat;
  if (t == "str") return ParamType::kStr;
  if (t == "bool") return ParamType::kBool;
  throw Error(ErrorCode::kInvalidArgument, "unknown param type: " + std::string(t));
}

std::string_view param_type_name(ParamType t) {
  switch (t) {
    case ParamType::kInt: return "int";
    case ParamType::kFloat: return "float";
    case ParamType::kStr: return "str";
    case ParamType::kBool: return "bool";
  }
  return "str";
}

bool type_matches(ParamType t, const nlohmann::json& v) {
  switch (t) {
    case ParamType::kInt: return v.is_number_integer();
    case ParamType::kFloat: return v.is_number();
    case ParamType::kStr: return v.is_string();
    case ParamType::kBool: return v.is_boolean();
  }
  return false;
}

std::string required_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("manifest needs non-empty \"") + key + "\"");
  }
  return j[key].get<std::string>();
}

}  // namespace

ExecutorManifest ExecutorManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "manifest must be a JSON object");
  ExecutorManifest m;
  m.name = required_string(j, "name");
  m.version = required_string(j, "version");
  m.description = j.value("description", "");
  if (!j.contains("kinds") || !j["kinds"].is_array() || j["kinds"].empty()) {
    throw Error(ErrorCode::kInvalidArgument, "manifest kinds must be a non-empty list");
  }
  for (const auto& k : j["kinds"]) {
    auto kind = parse_executor_kind(k.get<std::string>());
    if (std::find(m.kinds.begin(), m.kinds.end(), kind) == m.kinds.end()) m.kinds.push_back(kind);
  }
  std::set<std::string> keys;
  for (const auto& p : j.value("params", nlohmann::json::array())) {
    ParamSpec spec;
    spec.key = required_string(p, "key");
    spec.type = parse_param_type(p.value("type", "str"));
    spec.default_value = p.value("default", nlohmann::json(nullptr));
    spec.required = p.value("required", false);
    if (!spec.default_value.is_null() && !type_matches(spec.type, spec.default_value)) {
      throw Error(ErrorCode::kInvalidArgument, "default of param '" + spec.key + "' has wrong type");
    }
    if (!keys.insert(spec.key).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate param key '" + spec.key + "'");
    }
    m.params.push_back(std::move(spec));
  }
  if (!j.contains("entry") || !j["entry"].is_array() || j["entry"].empty()) {
    throw Error(ErrorCode::kInvalidArgument, "manifest needs an \"entry\" command");
  }
  m.entry = j["entry"].get<std::vector<std::string>>();
  if (j.contains("package_path")) m.package_path = j["package_path"].get<std::string>();
  return m;
}

nlohmann::json ExecutorManifest::to_json() const {
  nlohmann::json kinds_json = nlohmann::json::array();
  for (auto k : kinds) kinds_json.push_back(to_string(k));
  nlohmann::json params_json = nlohmann::json::array();
  for (const auto& p : params) {
    params_json.push_back({{"key", p.key},
                           {"type", param_type_name(p.type)},
                           {"default", p.default_value},
                           {"required", p.required}});
  }
  return {{"name", name},         {"version", version},
          {"kinds", kinds_json},  {"params", params_json},
          {"description", description}, {"entry", entry},
          {"package_path", package_path.string()}};
}

bool ExecutorManifest::supports(ExecutorKind kind) const {
  return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
}

nlohmann::json ExecutorManifest::resolve_params(const nlohmann::json& given) const {
  nlohmann::json out = given.is_object() ? given : nlohmann::json::object();
  for (const auto& p : params) {
    if (out.contains(p.key) && !out[p.key].is_null()) {
      if (!type_matches(p.type, out[p.key])) {
        throw Error(ErrorCode::kInvalidArgument, "param '" + p.key + "' must be " +
                                                     std::string(param_type_name(p.type)));
      }
    } else if (!p.default_value.is_null()) {
      out[p.key] = p.default_value;
    } else if (p.required) {
      throw Error(ErrorCode::kInvalidArgument, "missing required param '" + p.key + "'");
    }
  }
  return out;
}

ExecutorManifest load_manifest(const fs::path& package) {
  fs::path file = package / "manifest.json";
  if (!fs::exists(file)) {
    throw Error(ErrorCode::kInvalidArgument, "no manifest.json in " + package.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("manifest.json is not JSON: ") + e.what());
  }
  ExecutorManifest m = ExecutorManifest::from_json(j);
  m.package_path = fs::absolute(package).lexically_normal();
  return m;
}

ExecutorRegistry::ExecutorRegistry(fs::path registry_file) : file_(std::move(registry_file)) {
  if (file_.empty() || !fs::exists(file_)) return;
  auto j = nlohmann::json::parse(read_file(file_));
  for (const auto& e : j.value("executors", nlohmann::json::array())) {
    entries_.push_back(ExecutorManifest::from_json(e));
  }
}

void ExecutorRegistry::persist() const {
  if (file_.empty()) return;
  nlohmann::json j{{"executors", nlohmann::json::array()}};
  for (const auto& e : entries_) j["executors"].push_back(e.to_json());
  write_file_atomic(file_, j.dump(2));
}

ExecutorManifest ExecutorRegistry::register_executor(const fs::path& package) {
  ExecutorManifest m = load_manifest(package);
  std::lock_guard lock(mu_);
  for (const auto& e : entries_) {
    if (e.name == m.name && e.version == m.version) {
      throw Error(ErrorCode::kAlreadyExists, "executor " + m.key() + " already registered");
    }
  }
  entries_.push_back(m);
  persist();
  return m;
}

void ExecutorRegistry::deregister(const std::string& name, const std::string& version) {
  std::lock_guard lock(mu_);
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) {
    return e.name == name && e.version == version;
  });
  if (it == entries_.end()) throw Error(ErrorCode::kNotFound, "executor " + name + "@" + version);
  entries_.erase(it);
  persist();
}

std::vector<ExecutorManifest> ExecutorRegistry::list() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<ExecutorManifest> ExecutorRegistry::for_kind(ExecutorKind kind) const {
  std::lock_guard lock(mu_);
  std::vector<ExecutorManifest> out;
  for (const auto& e : entries_) {
    if (e.supports(kind)) out.push_back(e);
  }
  return out;
}

std::optional<ExecutorManifest> ExecutorRegistry::find(const std::string& name,
                                                       const std::string& version) const {
  std::lock_guard lock(mu_);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->name == name && (version.empty() || it->version == version)) return *it;
  }
  return std::nullopt;
}

ExecutorManifest ExecutorRegistry::resolve(ExecutorKind kind, const std::string& name) const {
  std::optional<ExecutorManifest> m;
  if (name.empty()) {
    auto all = for_kind(kind);
    if (!all.empty()) m = all.back();
  } else {
    auto at = name.find('@');
    m = at == std::string::npos ? find(name) : find(name.substr(0, at), name.substr(at + 1));
  }
  if (!m) {
    throw Error(ErrorCode::kNotFound, "no registered executor '" + name + "' for " +
                                          std::string(to_string(kind)));
  }
  if (!m->supports(kind)) {
    throw Error(ErrorCode::kInvalidArgument,
                "executor " + m->key() + " does not support " + std::string(to_string(kind)));
  }
  return *m;
}

}  // namespace iterforge
