#include <gtest/gtest.h>
#include <signal.h>

#include <thread>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/executor/instance.hpp"
#include "iterforge/executor/manifest.hpp"
#include "iterforge/executor/monitor.hpp"
#include "iterforge/executor/workspace.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace iterforge;
using iterforge::testing::TempDir;

namespace {

nlohmann::json manifest_json() {
  return {{"name", "demo"},
          {"version", "2.1"},
          {"kinds", {"train", "mine"}},
          {"params",
           {{{"key", "epochs"}, {"type", "int"}, {"default", 3}},
            {{"key", "lr"}, {"type", "float"}, {"default", 0.1}},
            {{"key", "tag"}, {"type", "str"}, {"required", true}}}},
          {"entry", {"run.sh"}}};
}

fs::path write_package(const fs::path& dir, nlohmann::json manifest) {
  fs::create_directories(dir);
  write_file(dir / "manifest.json", manifest.dump());
  return dir;
}

AnnotationObject box(std::uint32_t cls) {
  AnnotationObject a;
  a.class_id = cls;
  a.x_min = 1.5;
  a.y_min = 2;
  a.x_max = 3;
  a.y_max = 4.25;
  return a;
}

}  // namespace

TEST(Manifest, ParsesAndRoundTrips) {
  auto m = ExecutorManifest::from_json(manifest_json());
  EXPECT_EQ(m.key(), "demo@2.1");
  EXPECT_TRUE(m.supports(ExecutorKind::kMine));
  EXPECT_FALSE(m.supports(ExecutorKind::kInfer));
  auto again = ExecutorManifest::from_json(m.to_json());
  EXPECT_EQ(again.key(), m.key());
  EXPECT_EQ(again.params.size(), 3u);
}

TEST(Manifest, RejectsInvalidDocuments) {
  for (const char* drop : {"name", "version", "kinds", "entry"}) {
    auto j = manifest_json();
    j.erase(drop);
    EXPECT_THROW(ExecutorManifest::from_json(j), Error) << drop;
  }
  auto bad_kind = manifest_json();
  bad_kind["kinds"] = {"paint"};
  EXPECT_THROW(ExecutorManifest::from_json(bad_kind), Error);
  auto bad_type = manifest_json();
  bad_type["params"][0]["type"] = "complex";
  EXPECT_THROW(ExecutorManifest::from_json(bad_type), Error);
  auto bad_default = manifest_json();
  bad_default["params"][0]["default"] = "three";
  EXPECT_THROW(ExecutorManifest::from_json(bad_default), Error);
}

TEST(Manifest, ResolveParamsAppliesDefaultsAndTypes) {
  auto m = ExecutorManifest::from_json(manifest_json());
  auto p = m.resolve_params({{"tag", "x"}, {"extra", true}});
  EXPECT_EQ(p["epochs"], 3);
  EXPECT_EQ(p["lr"], 0.1);
  EXPECT_EQ(p["extra"], true);
  EXPECT_EQ(m.resolve_params({{"tag", "x"}, {"lr", 1}})["lr"], 1);
  EXPECT_THROW(m.resolve_params({{"epochs", 1}}), Error);
  EXPECT_THROW(m.resolve_params({{"tag", "x"}, {"epochs", 1.5}}), Error);
  EXPECT_THROW(m.resolve_params({{"tag", 7}}), Error);
}

TEST(Registry, PersistsAndResolves) {
  TempDir dir;
  auto v1 = manifest_json();
  auto v2 = manifest_json();
  v2["version"] = "3.0";
  fs::path p1 = write_package(dir / "p1", v1), p2 = write_package(dir / "p2", v2);
  {
    ExecutorRegistry reg(dir / "executors.json");
    reg.register_executor(p1);
    reg.register_executor(p2);
    EXPECT_THROW(reg.register_executor(p1), Error);
  }
  ExecutorRegistry reg(dir / "executors.json");
  EXPECT_EQ(reg.list().size(), 2u);
  EXPECT_EQ(reg.resolve(ExecutorKind::kTrain, "").version, "3.0");
  EXPECT_EQ(reg.resolve(ExecutorKind::kTrain, "demo@2.1").version, "2.1");
  EXPECT_EQ(reg.resolve(ExecutorKind::kTrain, "demo").version, "3.0");
  EXPECT_EQ(reg.find("demo", "2.1")->package_path, fs::canonical(p1));
  try {
    reg.resolve(ExecutorKind::kInfer, "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
  try {
    reg.resolve(ExecutorKind::kInfer, "demo");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  reg.deregister("demo", "3.0");
  EXPECT_EQ(reg.resolve(ExecutorKind::kTrain, "").version, "2.1");
}

TEST(Registry, MissingManifestIsInvalid) {
  TempDir dir;
  ExecutorRegistry reg;
  fs::create_directories(dir / "empty");
  EXPECT_THROW(reg.register_executor(dir / "empty"), Error);
}

TEST(Monitor, ParseAndFormatRoundTrip) {
  MonitorRecord r{"t-000001", 1700000000123, 0.5, MonitorState::kRunning, {"epoch 3", "loss 0.2"}};
  auto parsed = parse_monitor(format_monitor(r));
  ASSERT_TRUE(parsed);
  EXPECT_EQ(*parsed, r);
}

TEST(Monitor, RejectsMalformedLines) {
  EXPECT_FALSE(parse_monitor(""));
  EXPECT_FALSE(parse_monitor("t\t1\t0.5"));
  EXPECT_FALSE(parse_monitor("t\tx\t0.5\t2"));
  EXPECT_FALSE(parse_monitor("t\t1\t1.5\t2"));
  EXPECT_FALSE(parse_monitor("t\t1\t0.5\t9"));
  EXPECT_FALSE(parse_monitor("\t1\t0.5\t2"));
}

TEST(Monitor, ReaderKeepsLastGoodAndNeverRegresses) {
  TempDir dir;
  fs::path f = dir / "monitor.txt";
  MonitorReader reader(f, "t1");
  EXPECT_EQ(reader.read().state, MonitorState::kPending);
  EXPECT_FALSE(reader.saw_file());
  write_monitor_atomic(f, {"t1", 10, 0.6, MonitorState::kRunning, {}});
  EXPECT_DOUBLE_EQ(reader.read().progress, 0.6);
  write_file(f, "garbage");
  auto kept = reader.read();
  EXPECT_DOUBLE_EQ(kept.progress, 0.6);
  EXPECT_EQ(reader.parse_warnings(), 1u);
  write_monitor_atomic(f, {"t1", 11, 0.2, MonitorState::kRunning, {}});
  EXPECT_DOUBLE_EQ(reader.read().progress, 0.6);
  write_monitor_atomic(f, {"t1", 12, 0.9, MonitorState::kDone, {}});
  EXPECT_DOUBLE_EQ(reader.read().progress, 1.0);
}

TEST(Workspace, AnnotationTextRoundTrips) {
  Annotations anns{box(0), box(3)};
  EXPECT_EQ(parse_annotations(format_annotations(anns)), anns);
  EXPECT_TRUE(parse_annotations("").empty());
  EXPECT_THROW(parse_annotations("1 2 3"), Error);
}

class WorkspaceFixture : public ::testing::Test {
 protected:
  WorkspaceFixture() : assets_({dir_ / "assets"}), models_(dir_ / "models") {
    a_ = assets_.put_asset("alpha", "a");
    b_ = assets_.put_asset("beta", "b");
    train_ = assets_.commit_snapshot({}, {{a_, {box(1)}}, {b_, {}}}, "t", {"x", "y"});
    val_ = assets_.commit_snapshot({}, {{b_, {box(0)}}}, "t", {"x", "y"});
  }

  Workspace train_workspace(const std::string& task, nlohmann::json params) {
    WorkspaceRequest req;
    req.task_id = task;
    req.kind = ExecutorKind::kTrain;
    req.train = train_;
    req.validation = val_;
    req.params = std::move(params);
    return prepare_workspace(assets_, models_, dir_ / "ws" / task, req);
  }

  TempDir dir_;
  AssetStore assets_;
  ModelStore models_;
  AssetId a_, b_;
  SnapshotId train_, val_;
};

TEST_F(WorkspaceFixture, TrainWorkspaceLayout) {
  Workspace ws = train_workspace("t-1", {{"epochs", 2}});
  auto idx = read_index(ws.in() / "train-index.tsv");
  ASSERT_EQ(idx.size(), 2u);
  EXPECT_EQ(idx[0].asset_path, "assets/" + std::string(a_.shard()) + "/" + a_.hex());
  EXPECT_FALSE(idx[0].annotation_path.empty());
  EXPECT_TRUE(idx[1].annotation_path.empty());
  EXPECT_EQ(read_file(ws.in() / idx[0].asset_path), "alpha");
  EXPECT_EQ(parse_annotations(read_file(ws.in() / idx[0].annotation_path)), Annotations{box(1)});
  EXPECT_EQ(read_file(ws.in() / "class-names.txt"), "x\ny\n");
  EXPECT_TRUE(fs::is_directory(ws.out()));
  write_launch_config(ws, std::vector<int>{1, 3});
  auto cfg = nlohmann::json::parse(read_file(ws.in() / "config.json"));
  EXPECT_EQ(cfg["task_id"], "t-1");
  EXPECT_EQ(cfg["kind"], "train");
  EXPECT_EQ(cfg["gpu_ids"], (std::vector<int>{1, 3}));
  EXPECT_EQ(cfg["params"]["epochs"], 2);
}

TEST_F(WorkspaceFixture, MissingInputsAreRejected) {
  WorkspaceRequest mine;
  mine.task_id = "t-2";
  mine.kind = ExecutorKind::kMine;
  mine.candidates = train_;
  try {
    prepare_workspace(assets_, models_, dir_ / "ws" / "t-2", mine);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFailedPrecondition);
  }
  mine.model = ModelId{"m-404"};
  try {
    prepare_workspace(assets_, models_, dir_ / "ws" / "t-2", mine);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
  SnapshotId empty = assets_.commit_snapshot({}, {}, "t", {"x"});
  fs::create_directories(dir_ / "m");
  write_file(dir_ / "m" / "w", "w");
  mine.model = models_.register_model(dir_ / "m", "t", "e", 0.5, "");
  mine.candidates = empty;
  EXPECT_THROW(prepare_workspace(assets_, models_, dir_ / "ws" / "t-3", mine), Error);
}

TEST_F(WorkspaceFixture, NonEmptyRootRejected) {
  fs::create_directories(dir_ / "ws" / "t-9");
  write_file(dir_ / "ws" / "t-9" / "stale", "x");
  EXPECT_THROW(train_workspace("t-9", {}), Error);
}

class InstanceFixture : public WorkspaceFixture {
 protected:
  std::shared_ptr<ExecutorInstance> launch(const std::string& task, const std::string& mode) {
    ExecutorManifest m = load_manifest(ITERFORGE_MOCK_EXECUTOR_DIR);
    Workspace ws = train_workspace(task, m.resolve_params({{"mode", mode}}));
    write_launch_config(ws, std::vector<int>{0});
    InstanceOptions o;
    o.archive_root = dir_ / "archive";
    o.log_root = dir_ / "logs";
    o.stop_grace = std::chrono::milliseconds(300);
    return ExecutorInstance::launch(m, ws, std::vector<int>{0}, o);
  }
};

TEST_F(InstanceFixture, CleanExitIsSuccessWithOutputs) {
  auto inst = launch("t-clean", "clean");
  TaskOutcome o = inst->finalize(inst->wait());
  EXPECT_EQ(o.status, OutcomeStatus::kSuccess);
  EXPECT_EQ(o.accuracy, 0.5);
  EXPECT_FALSE(o.artifacts.empty());
  ASSERT_TRUE(o.stored_log);
  EXPECT_NE(read_file(*o.stored_log).find("mode=clean"), std::string::npos);
  EXPECT_EQ(inst->finalize(inst->wait()).status, OutcomeStatus::kSuccess);
}

TEST_F(InstanceFixture, NonzeroExitIsFailureWithArchive) {
  auto inst = launch("t-crash", "crash");
  TaskOutcome o = inst->finalize(inst->wait());
  EXPECT_EQ(o.status, OutcomeStatus::kFailure);
  EXPECT_EQ(o.exit_detail, "exit code 7");
  ASSERT_TRUE(o.archived_intermediates);
  EXPECT_EQ(read_file(*o.archived_intermediates / "partial.txt"), "partial\n");
}

TEST_F(InstanceFixture, CleanExitWithoutOutputsIsFailure) {
  auto inst = launch("t-lie", "lie");
  TaskOutcome o = inst->finalize(inst->wait());
  EXPECT_EQ(o.status, OutcomeStatus::kFailure);
  EXPECT_NE(o.exit_detail.find("outputs invalid"), std::string::npos);
}

TEST_F(InstanceFixture, StopIsBrokenAndEscalatesToKill) {
  for (const char* mode : {"hang", "stubborn"}) {
    auto inst = launch(std::string("t-") + mode, mode);
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    EXPECT_FALSE(inst->poll());
    TaskOutcome o = inst->stop();
    EXPECT_EQ(o.status, OutcomeStatus::kBroken) << mode;
    EXPECT_NE(::kill(inst->pid(), 0), 0) << mode;
  }
}

TEST_F(InstanceFixture, StopAfterExitKeepsNaturalOutcome) {
  auto inst = launch("t-late", "clean");
  inst->wait();
  EXPECT_EQ(inst->stop().status, OutcomeStatus::kSuccess);
}

TEST_F(InstanceFixture, MissingEntrySpawnFails) {
  auto m = ExecutorManifest::from_json(manifest_json());
  m.entry = {"/nonexistent/binary"};
  Workspace ws = train_workspace("t-spawn", {});
  auto inst = ExecutorInstance::launch(m, ws, {}, {});
  TaskOutcome o = inst->finalize(inst->wait());
  EXPECT_EQ(o.status, OutcomeStatus::kFailure);
}

TEST(MiningResult, ParsesAndValidates) {
  TempDir dir;
  std::string id = AssetId::of_bytes("x").hex();
  write_file(dir / "r.tsv", id + "\t0.25\n\n" + id + "\t1e-3\n");
  auto r = read_mining_result(dir / "r.tsv");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_DOUBLE_EQ(r[1].second, 0.001);
  write_file(dir / "bad.tsv", "nothex\t0.2\n");
  EXPECT_THROW(read_mining_result(dir / "bad.tsv"), Error);
  write_file(dir / "bad2.tsv", id + "\t0.2x\n");
  EXPECT_THROW(read_mining_result(dir / "bad2.tsv"), Error);
}
