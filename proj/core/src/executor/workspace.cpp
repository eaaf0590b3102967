#include "iterforge/executor/workspace.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

namespace iterforge {

namespace fs = std::filesystem;

std::string index_line(const AssetId& id, bool labeled) {
  std::string line = "assets/" + std::string(id.shard()) + "/" + id.hex() + "\t";
  if (labeled) line += "annotations/" + id.hex() + ".ann";
  return line;
}

std::vector<IndexEntry> read_index(const fs::path& file) {
  std::vector<IndexEntry> out;
  std::istringstream in(read_file(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "index line without tab: " + line);
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

std::string format_annotations(const Annotations& annotations) {
  std::string out;
  char buf[160];
  for (const auto& a : annotations) {
    std::snprintf(buf, sizeof(buf), "%u %.17g %.17g %.17g %.17g\n", a.class_id, a.x_min, a.y_min,
                  a.x_max, a.y_max);
    out += buf;
  }
  return out;
}

Annotations parse_annotations(std::string_view text) {
  Annotations out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long long cls = -1;
    AnnotationObject a;
    if (!(ls >> cls >> a.x_min >> a.y_min >> a.x_max >> a.y_max) || cls < 0) {
      throw Error(ErrorCode::kInvalidArgument, "bad annotation line: " + line);
    }
    std::string rest;
    if (ls >> rest) throw Error(ErrorCode::kInvalidArgument, "bad annotation line: " + line);
    a.class_id = static_cast<std::uint32_t>(cls);
    out.push_back(a);
  }
  return out;
}

namespace {

void write_config(const Workspace& ws, const std::vector<std::string>& class_names,
                  std::span<const int> gpu_ids, const nlohmann::json& params) {
  nlohmann::ordered_json config;
  config["task_id"] = ws.task_id;
  config["kind"] = std::string(to_string(ws.kind));
  config["class_names"] = class_names;
  config["gpu_ids"] = std::vector<int>(gpu_ids.begin(), gpu_ids.end());
  config["params"] = params;
  write_file_atomic(ws.in() / "config.json", config.dump());
}

class InputWriter {
 public:
  InputWriter(const AssetStore& assets, const Workspace& ws) : assets_(assets), ws_(ws) {}

  void write_index(const DatasetSnapshot& snap, const char* file_name) {
    std::string text;
    for (const auto& id : snap.index().ids()) {
      const Annotations& anns = *snap.annotations(id);
      link_asset(id);
      if (!anns.empty() && annotated_.insert(id).second) {
        write_file(ws_.in() / "annotations" / (id.hex() + ".ann"), format_annotations(anns));
      }
      text += index_line(id, !anns.empty());
      text += '\n';
    }
    write_file(ws_.in() / file_name, text);
  }

 private:
  void link_asset(const AssetId& id) {
    if (!linked_.insert(id).second) return;
    fs::path dst = ws_.in() / "assets" / std::string(id.shard()) / id.hex();
    fs::create_directories(dst.parent_path());
    std::error_code ec;
    fs::create_hard_link(assets_.blob_path(id), dst, ec);
    if (ec) {
      fs::copy_file(assets_.blob_path(id), dst, fs::copy_options::overwrite_existing, ec);
      if (ec) throw Error(ErrorCode::kIo, "cannot stage asset " + id.hex() + ": " + ec.message());
    }
  }

  const AssetStore& assets_;
  const Workspace& ws_;
  std::set<AssetId> linked_;
  std::set<AssetId> annotated_;
};

}  // namespace

Workspace prepare_workspace(const AssetStore& assets, const ModelStore& models,
                            const fs::path& root, const WorkspaceRequest& request) {
  const std::string kind_name(to_string(request.kind));
  SnapshotPtr train, validation, candidates;
  switch (request.kind) {
    case ExecutorKind::kTrain:
      if (!request.train || !request.validation) {
        throw Error(ErrorCode::kFailedPrecondition, "train needs training and validation snapshots");
      }
      train = assets.snapshot(*request.train);
      validation = assets.snapshot(*request.validation);
      break;
    case ExecutorKind::kMine:
    case ExecutorKind::kInfer:
      if (!request.candidates) {
        throw Error(ErrorCode::kFailedPrecondition, kind_name + " needs a candidate snapshot");
      }
      if (!request.model) throw Error(ErrorCode::kFailedPrecondition, kind_name + " needs a model");
      candidates = assets.snapshot(*request.candidates);
      if (candidates->empty()) {
        throw Error(ErrorCode::kFailedPrecondition, kind_name + " on empty candidate snapshot " +
                                                        request.candidates->value);
      }
      break;
  }
  if (request.model && !models.contains(*request.model)) {
    throw Error(ErrorCode::kNotFound, "unknown model " + request.model->value);
  }

  Workspace ws{root, request.kind, request.task_id};
  std::error_code ec;
  if (fs::exists(root) && !fs::is_empty(root)) {
    throw Error(ErrorCode::kFailedPrecondition, "workspace " + root.string() + " is not empty");
  }
  for (const auto& dir : {ws.in() / "assets", ws.in() / "annotations", ws.in() / "models", ws.out()}) {
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  }

  std::vector<std::string> class_names = request.class_names;
  if (class_names.empty()) class_names = (train ? train : candidates)->class_names();

  InputWriter writer(assets, ws);
  if (train) {
    writer.write_index(*train, "train-index.tsv");
    writer.write_index(*validation, "val-index.tsv");
  } else {
    writer.write_index(*candidates, "candidate-index.tsv");
  }
  if (request.model) copy_tree(models.directory(*request.model), ws.in() / "models");

  std::string names;
  for (const auto& n : class_names) names += n + "\n";
  write_file(ws.in() / "class-names.txt", names);
  write_config(ws, class_names, {}, request.params);
  return ws;
}

void write_launch_config(const Workspace& ws, std::span<const int> gpu_ids) {
  auto config = nlohmann::ordered_json::parse(read_file(ws.in() / "config.json"));
  config["gpu_ids"] = std::vector<int>(gpu_ids.begin(), gpu_ids.end());
  write_file_atomic(ws.in() / "config.json", config.dump());
}

}  // namespace iterforge
