#include "iterforge/toy/executors.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "iterforge/assets/types.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/sha256.hpp"
#include "iterforge/common/time.hpp"
#include "iterforge/executor/monitor.hpp"
#include "iterforge/executor/workspace.hpp"
#include "iterforge/toy/model.hpp"
#include "iterforge/toy/payload.hpp"

namespace iterforge::toy {

namespace fs = std::filesystem;

namespace {

struct Context {
  fs::path root;
  nlohmann::json config;
  std::string task_id;
  std::size_t dim = 8;

  fs::path in(const std::string& rel) const { return root / "in" / rel; }
  fs::path out(const std::string& rel) const { return root / "out" / rel; }

  void monitor(double progress, MonitorState state, std::vector<std::string> messages = {}) const {
    write_monitor_atomic(out("monitor.txt"),
                         MonitorRecord{task_id, now_ms(), progress, state, std::move(messages)});
  }

  int fail(const std::string& message) const {
    std::cerr << "error: " << message << std::endl;
    monitor(0.0, MonitorState::kError, {message});
    return 2;
  }
};

Context open_workspace(const fs::path& root) {
  Context ctx;
  ctx.root = root;
  ctx.config = nlohmann::json::parse(read_file(root / "in" / "config.json"));
  ctx.task_id = ctx.config.value("task_id", "");
  const auto& params = ctx.config.value("params", nlohmann::json::object());
  if (params.contains("dim")) ctx.dim = params["dim"].get<std::size_t>();
  return ctx;
}

// Emits a progress point every max(1, total/20) items.
class Ticker {
 public:
  Ticker(const Context& ctx, std::size_t total)
      : ctx_(ctx), total_(total), step_(std::max<std::size_t>(1, total / 20)) {}
  void tick() {
    ++done_;
    if (done_ % step_ == 0 && done_ < total_) {
      ctx_.monitor(static_cast<double>(done_) / static_cast<double>(total_), MonitorState::kRunning);
    }
  }

 private:
  const Context& ctx_;
  std::size_t total_;
  std::size_t step_;
  std::size_t done_ = 0;
};

std::string asset_id_of(const IndexEntry& e) { return fs::path(e.asset_path).filename().string(); }

std::optional<std::uint32_t> first_class(const Context& ctx, const IndexEntry& e) {
  if (e.annotation_path.empty()) return std::nullopt;
  Annotations ann = parse_annotations(read_file(ctx.root / "in" / e.annotation_path));
  if (ann.empty()) return std::nullopt;
  return ann.front().class_id;
}

std::optional<std::vector<double>> load_features(const Context& ctx, const IndexEntry& e) {
  auto v = parse_payload(read_file(ctx.root / "in" / e.asset_path), ctx.dim);
  if (!v) std::cerr << "warning: unparseable payload " << asset_id_of(e) << std::endl;
  return v;
}

std::vector<IndexEntry> sorted_index(const fs::path& file) {
  auto entries = read_index(file);
  std::sort(entries.begin(), entries.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.asset_path < b.asset_path; });
  return entries;
}

std::optional<CentroidModel> load_model(const Context& ctx) {
  fs::path file = ctx.in("models/model.txt");
  if (!fs::exists(file)) return std::nullopt;
  return CentroidModel::parse(read_file(file));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double random_score(const std::string& asset_id, std::uint64_t seed) {
  std::uint64_t h = std::stoull(asset_id.substr(0, 16), nullptr, 16);
  return static_cast<double>(splitmix64(h ^ splitmix64(seed)) >> 11) * 0x1.0p-53;
}

}  // namespace

int toy_train(const fs::path& workspace) {
  Context ctx = open_workspace(workspace);
  ctx.monitor(0.0, MonitorState::kRunning);
  auto classes = ctx.config.value("class_names", std::vector<std::string>{});
  auto train = sorted_index(ctx.in("train-index.tsv"));
  auto val = sorted_index(ctx.in("val-index.tsv"));
  Ticker ticker(ctx, train.size() + val.size());

  CentroidModel model;
  model.dim = ctx.dim;
  model.centroids.resize(classes.size());
  if (auto pre = load_model(ctx)) {
    if (pre->dim == ctx.dim && pre->class_count() == classes.size()) {
      model.centroids = pre->centroids;
    } else {
      std::cerr << "warning: pretrained model shape mismatch, ignored" << std::endl;
    }
  }

  std::vector<std::vector<double>> sums(classes.size(), std::vector<double>(ctx.dim, 0.0));
  std::vector<std::size_t> counts(classes.size(), 0);
  std::string digest_input;
  std::size_t labeled = 0;
  for (const auto& e : train) {
    ticker.tick();
    auto cls = first_class(ctx, e);
    if (!cls) continue;
    if (*cls >= classes.size()) {
      std::cerr << "warning: class " << *cls << " out of range" << std::endl;
      continue;
    }
    auto x = load_features(ctx, e);
    if (!x) continue;
    for (std::size_t d = 0; d < ctx.dim; ++d) sums[*cls][d] += (*x)[d];
    ++counts[*cls];
    ++labeled;
    digest_input += asset_id_of(e) + "\t" + std::to_string(*cls) + "\n";
  }
  if (labeled == 0) return ctx.fail("no labeled training assets");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (counts[c] == 0) continue;
    std::vector<double> centroid(ctx.dim);
    for (std::size_t d = 0; d < ctx.dim; ++d) centroid[d] = sums[c][d] / static_cast<double>(counts[c]);
    model.centroids[c] = std::move(centroid);
  }
  model.training_digest = sha256_hex(digest_input);

  std::size_t val_labeled = 0;
  std::size_t correct = 0;
  for (const auto& e : val) {
    ticker.tick();
    auto cls = first_class(ctx, e);
    if (!cls) continue;
    auto x = load_features(ctx, e);
    if (!x) continue;
    ++val_labeled;
    if (model.nearest(*x).best == static_cast<int>(*cls)) ++correct;
  }
  double accuracy =
      val_labeled == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(val_labeled);

  fs::create_directories(ctx.out("models"));
  write_file_atomic(ctx.out("models/model.txt"), model.serialize());
  nlohmann::json result = {{"accuracy", accuracy},
                           {"train_labeled", labeled},
                           {"val_labeled", val_labeled},
                           {"training_digest", model.training_digest}};
  write_file_atomic(ctx.out("result.json"), result.dump() + "\n");
  std::cout << "trained on " << labeled << " assets, accuracy " << accuracy << std::endl;
  ctx.monitor(1.0, MonitorState::kDone);
  return 0;
}

int toy_mine(const fs::path& workspace) {
  Context ctx = open_workspace(workspace);
  ctx.monitor(0.0, MonitorState::kRunning);
  auto model = load_model(ctx);
  if (!model) return ctx.fail("mining needs in/models/model.txt");
  const auto& params = ctx.config.value("params", nlohmann::json::object());
  std::string strategy = params.value("strategy", "uncertainty");
  std::uint64_t seed = params.value("seed", std::uint64_t{0});
  if (strategy != "uncertainty" && strategy != "random") {
    return ctx.fail("unknown strategy " + strategy);
  }
  auto candidates = sorted_index(ctx.in("candidate-index.tsv"));
  Ticker ticker(ctx, candidates.size());

  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(candidates.size());
  for (const auto& e : candidates) {
    ticker.tick();
    std::string id = asset_id_of(e);
    if (strategy == "random") {
      scored.emplace_back(id, random_score(id, seed));
      continue;
    }
    auto x = load_features(ctx, e);
    Nearest n;
    if (x) n = model->nearest(*x);
    if (!x || n.second < 0) {
      if (x) std::cerr << "warning: fewer than two centroids, " << id << " scored 0" << std::endl;
      scored.emplace_back(id, 0.0);
      continue;
    }
    scored.emplace_back(id, 1.0 / (std::abs(n.best_distance - n.second_distance) + 1e-6));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::string body;
  char buf[64];
  for (const auto& [id, score] : scored) {
    std::snprintf(buf, sizeof buf, "\t%.17g\n", score);
    body += id + buf;
  }
  write_file_atomic(ctx.out("result.tsv"), body);
  std::cout << "mined " << scored.size() << " candidates (" << strategy << ")" << std::endl;
  ctx.monitor(1.0, MonitorState::kDone);
  return 0;
}

int toy_infer(const fs::path& workspace) {
  Context ctx = open_workspace(workspace);
  ctx.monitor(0.0, MonitorState::kRunning);
  auto model = load_model(ctx);
  if (!model) return ctx.fail("inference needs in/models/model.txt");
  auto candidates = sorted_index(ctx.in("candidate-index.tsv"));
  Ticker ticker(ctx, candidates.size());
  fs::create_directories(ctx.out("infer"));
  std::size_t written = 0;
  for (const auto& e : candidates) {
    ticker.tick();
    auto x = load_features(ctx, e);
    if (!x) continue;
    int cls = model->nearest(*x).best;
    if (cls < 0) continue;
    write_file(ctx.out("infer/" + asset_id_of(e) + ".ann"), std::to_string(cls) + " 0 0 1 1\n");
    ++written;
  }
  std::cout << "inferred " << written << " of " << candidates.size() << " assets" << std::endl;
  ctx.monitor(1.0, MonitorState::kDone);
  return 0;
}

int run_toy_executor(const fs::path& workspace) {
  try {
    auto config = nlohmann::json::parse(read_file(workspace / "in" / "config.json"));
    std::string kind = config.value("kind", "");
    if (kind == "train") return toy_train(workspace);
    if (kind == "mine") return toy_mine(workspace);
    if (kind == "infer") return toy_infer(workspace);
    std::cerr << "error: unsupported kind '" << kind << "'" << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    try {
      auto config = nlohmann::json::parse(read_file(workspace / "in" / "config.json"));
      write_monitor_atomic(workspace / "out" / "monitor.txt",
                           MonitorRecord{config.value("task_id", ""), now_ms(), 0.0,
                                         MonitorState::kError, {e.what()}});
    } catch (...) {
    }
    return 3;
  }
}

void write_toy_package(const fs::path& package_dir, const fs::path& binary,
                       const std::string& name, const std::string& version) {
  fs::create_directories(package_dir);
  nlohmann::json manifest = {
      {"name", name},
      {"version", version},
      {"kinds", {"train", "mine", "infer"}},
      {"description", "Nearest-centroid reference executor for feature-vector assets"},
      {"params",
       {
           {{"key", "dim"}, {"type", "int"}, {"default", 8}},
           {{"key", "strategy"}, {"type", "str"}, {"default", "uncertainty"}},
           {{"key", "seed"}, {"type", "int"}, {"default", 0}},
       }},
      {"entry", {fs::absolute(binary).string()}},
  };
  write_file_atomic(package_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace iterforge::toy
