#include <gtest/gtest.h>

#include <set>

#include "iterforge/assets/dataset_ops.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "test_support.hpp"

using namespace iterforge;
using namespace iterforge::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInternal;
}

class Loop : public ::testing::Test {
 protected:
  Loop() {
    platform_ = Platform::open(test_config(dir_ / "store"));
    register_toy(*platform_, dir_.path());
    world_ = build_world(*platform_, dir_ / "data", WorldSpec{200, 20, 100, 3});
  }

  IterationEngine& engine() { return platform_->engine(); }

  // Waits until no stage task is running.
  IterationState settle(const std::string& id) {
    auto s = engine().wait_until(
        id, [](const IterationState& s) { return !s.stage_task_id || is_final(s.stage); },
        std::chrono::seconds(60));
    EXPECT_TRUE(s.has_value());
    return s.value_or(engine().get(id));
  }

  IterationState step(const std::string& id) {
    engine().advance(id);
    return settle(id);
  }

  std::set<AssetId> ids_of(const SnapshotId& s) {
    auto snap = platform_->assets().snapshot(s);
    return {snap->index().ids().begin(), snap->index().ids().end()};
  }

  TempDir dir_{"iter"};
  std::unique_ptr<Platform> platform_;
  World world_;
};

}  // namespace

TEST(IterState, StageNamesAndJsonRoundTrip) {
  for (auto st : {IterStage::kMine, IterStage::kLabel, IterStage::kUpdateData, IterStage::kTrain,
                  IterStage::kEvaluate, IterStage::kFinished, IterStage::kExhausted}) {
    EXPECT_EQ(parse_iter_stage(to_string(st)), st);
  }
  EXPECT_TRUE(is_final(IterStage::kFinished));
  EXPECT_TRUE(is_final(IterStage::kExhausted));
  EXPECT_FALSE(is_final(IterStage::kEvaluate));

  IterationState s;
  s.project_id = "p-1";
  s.config.name = "n";
  s.config.class_names = {"a", "b"};
  s.config.data_superset = SnapshotId{"s1"};
  s.config.validation = SnapshotId{"s2"};
  s.config.train_params = {{"dim", 4}};
  s.round = 2;
  s.stage = IterStage::kUpdateData;
  s.training_data = SnapshotId{"s3"};
  s.labeled_batch = SnapshotId{"s4"};
  s.current_model = ModelId{"m-1"};
  s.current_accuracy = 0.75;
  s.stage_task_id = "t-9";
  s.history = {{1, 10, 0.5, ModelId{"m-0"}, SnapshotId{"s0"}}, {2, 20, 0.75, ModelId{"m-1"}, SnapshotId{"s3"}}};
  EXPECT_EQ(IterationState::from_json(s.to_json()).to_json(), s.to_json());
  EXPECT_EQ(ProjectConfig::from_json(s.config.to_json()).to_json(), s.config.to_json());
}

TEST_F(Loop, CreateProjectValidation) {
  auto cfg = [&] { return loop_config(world_); };
  auto bad = cfg();
  bad.target_accuracy = 0.0;
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad.target_accuracy = 1.01;
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad = cfg();
  bad.mining_batch_size = 0;
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad = cfg();
  bad.class_names.clear();
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad = cfg();
  bad.gpu_count = 0;
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad = cfg();
  bad.data_superset = SnapshotId{"nope"};
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kNotFound);
  bad = cfg();
  bad.initial_data = world_.validation;
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad = cfg();
  bad.initial_data.reset();
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kInvalidArgument);
  bad.initial_model = ModelId{"m-missing"};
  EXPECT_EQ(code_of([&] { engine().create_project(bad); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { engine().get("p-missing"); }), ErrorCode::kNotFound);
}

TEST_F(Loop, ManualRoundKeepsLoopInvariants) {
  auto cfg = loop_config(world_, 0.999, 15);
  std::string id = engine().create_project(cfg);
  IterationState s = engine().get(id);
  EXPECT_EQ(s.stage, IterStage::kTrain);
  EXPECT_EQ(s.round, 0u);
  EXPECT_EQ(s.training_data, world_.initial);

  s = step(id);
  ASSERT_FALSE(s.stage_failed) << s.stage_error;
  EXPECT_EQ(s.stage, IterStage::kEvaluate);
  EXPECT_TRUE(s.trained_model);
  EXPECT_EQ(engine().next_action(id).stage, IterStage::kEvaluate);

  s = engine().advance(id);
  EXPECT_EQ(s.round, 1u);
  EXPECT_EQ(s.stage, IterStage::kMine);
  ASSERT_EQ(s.history.size(), 1u);
  EXPECT_EQ(s.history[0].training_size, 20u);
  EXPECT_EQ(s.output_model, s.current_model);
  auto model = platform_->models().get(*s.current_model);
  EXPECT_DOUBLE_EQ(s.current_accuracy, *model.accuracy);

  std::set<AssetId> before = ids_of(*s.training_data);
  StageAction mine = engine().next_action(id);
  EXPECT_TRUE(mine.available);
  EXPECT_EQ(mine.spec["kind"], "mine");
  s = step(id);
  ASSERT_FALSE(s.stage_failed) << s.stage_error;
  ASSERT_EQ(s.stage, IterStage::kLabel);
  std::set<AssetId> mined = ids_of(*s.mined_batch);
  EXPECT_EQ(mined.size(), 15u);
  std::set<AssetId> superset = ids_of(world_.superset);
  for (const auto& m : mined) {
    EXPECT_FALSE(before.contains(m));
    EXPECT_TRUE(superset.contains(m));
  }

  s = step(id);
  ASSERT_EQ(s.stage, IterStage::kUpdateData) << s.stage_error;
  auto labeled = platform_->assets().snapshot(*s.labeled_batch);
  for (const auto& aid : labeled->index().ids()) {
    ASSERT_EQ(labeled->annotations(aid)->size(), 1u);
    EXPECT_EQ(static_cast<int>((*labeled->annotations(aid))[0].class_id), world_.truth.at(aid.hex()));
  }

  s = step(id);
  ASSERT_EQ(s.stage, IterStage::kTrain) << s.stage_error;
  std::set<AssetId> after = ids_of(*s.training_data);
  EXPECT_EQ(after.size(), before.size() + mined.size());
  for (const auto& b : before) EXPECT_TRUE(after.contains(b));
  for (const auto& m : mined) EXPECT_TRUE(after.contains(m));

  s = step(id);
  s = engine().advance(id);
  EXPECT_EQ(s.round, 2u);
  ASSERT_EQ(s.history.size(), 2u);
  EXPECT_EQ(s.history[1].training_size, 35u);

  std::vector<std::string> events;
  for (const auto& e : engine().audit(id)) events.push_back(e.at("event"));
  EXPECT_EQ(events.front(), "created");
  EXPECT_EQ(std::count(events.begin(), events.end(), "evaluated"), 2);
}

TEST_F(Loop, RunningStageBlocksAdvanceAndInterruptStopsIt) {
  register_mock(*platform_);
  auto cfg = loop_config(world_);
  cfg.train_executor = "mock@1.0.0";
  cfg.train_params = {{"mode", "hang"}};
  std::string id = engine().create_project(cfg);
  IterationState s = engine().advance(id);
  ASSERT_TRUE(s.stage_task_id);
  std::string task = *s.stage_task_id;
  StageAction a = engine().next_action(id);
  EXPECT_TRUE(a.in_progress);
  EXPECT_FALSE(a.available);
  EXPECT_EQ(a.task_id, task);
  EXPECT_EQ(code_of([&] { engine().advance(id); }), ErrorCode::kFailedPrecondition);

  ASSERT_TRUE(wait_for([&] { return platform_->scheduler().get(task)->state == TaskState::kRunning; },
                       std::chrono::seconds(20)));
  s = engine().interrupt(id);
  EXPECT_EQ(s.stage, IterStage::kFinished);
  auto t = platform_->scheduler().wait(task, std::chrono::seconds(30));
  ASSERT_TRUE(t);
  EXPECT_EQ(t->state, TaskState::kBroken);
  auto idle = engine().wait_until(
      id, [](const IterationState& s) { return !s.stage_task_id; }, std::chrono::seconds(10));
  ASSERT_TRUE(idle);
  EXPECT_EQ(idle->stage, IterStage::kFinished);
}

TEST_F(Loop, AutoAdvanceReachesTarget) {
  auto cfg = loop_config(world_, 0.85, 20);
  cfg.auto_advance = true;
  std::string id = engine().create_project(cfg);
  engine().advance(id);
  auto s = engine().wait_until(
      id, [](const IterationState& s) { return is_final(s.stage) || s.stage_failed; },
      std::chrono::seconds(120));
  ASSERT_TRUE(s);
  ASSERT_EQ(s->stage, IterStage::kFinished) << s->stage_error;
  EXPECT_GT(s->current_accuracy, 0.85);
  EXPECT_EQ(s->output_model, s->current_model);
  EXPECT_FALSE(s->interrupted);
  for (std::size_t i = 1; i < s->history.size(); ++i) {
    EXPECT_GT(s->history[i].training_size, s->history[i - 1].training_size);
    EXPECT_LE(s->history[i].training_size - s->history[i - 1].training_size, 20u);
  }
  EXPECT_EQ(code_of([&] { engine().advance(id); }), ErrorCode::kFailedPrecondition);
  EXPECT_FALSE(engine().next_action(id).available);
}

TEST_F(Loop, UnreachableTargetExhaustsCandidates) {
  World small = build_world(*platform_, dir_ / "small", WorldSpec{30, 10, 100, 5});
  auto cfg = loop_config(small, 1.0, 12);
  cfg.auto_advance = true;
  std::string id = engine().create_project(cfg);
  engine().advance(id);
  auto s = engine().wait_until(
      id, [](const IterationState& s) { return is_final(s.stage) || s.stage_failed; },
      std::chrono::seconds(120));
  ASSERT_TRUE(s);
  ASSERT_EQ(s->stage, IterStage::kExhausted) << s->stage_error;
  EXPECT_EQ(s->history.back().training_size, 30u);
  EXPECT_EQ(s->output_model, s->current_model);
  std::vector<std::size_t> sizes;
  for (const auto& h : s->history) sizes.push_back(h.training_size);
  EXPECT_EQ(sizes, (std::vector<std::size_t>{10, 22, 30}));
}

TEST_F(Loop, InterruptKeepsCurrentModel) {
  std::string id = engine().create_project(loop_config(world_, 0.999));
  IterationState early = engine().interrupt(id);
  EXPECT_EQ(early.stage, IterStage::kFinished);
  EXPECT_TRUE(early.interrupted);
  EXPECT_FALSE(early.output_model);
  EXPECT_FALSE(early.warning.empty());
  EXPECT_EQ(code_of([&] { engine().interrupt(id); }), ErrorCode::kFailedPrecondition);

  std::string id2 = engine().create_project(loop_config(world_, 0.999));
  step(id2);
  engine().advance(id2);
  engine().advance(id2);
  IterationState s = engine().interrupt(id2);
  EXPECT_TRUE(s.interrupted);
  EXPECT_EQ(s.output_model, s.current_model);
  EXPECT_TRUE(s.output_model);
  EXPECT_EQ(engine().audit(id2).back().at("event"), "interrupted");
}

TEST_F(Loop, FailedStageCanBeRetried) {
  auto cfg = loop_config(world_);
  cfg.train_params = {{"dim", 3}};
  std::string id = engine().create_project(cfg);
  IterationState s = step(id);
  EXPECT_TRUE(s.stage_failed);
  EXPECT_EQ(s.stage, IterStage::kTrain);
  EXPECT_FALSE(s.stage_error.empty());
  StageAction a = engine().next_action(id);
  EXPECT_TRUE(a.available);
  EXPECT_TRUE(a.retry);
  s = step(id);
  EXPECT_TRUE(s.stage_failed);
}

TEST_F(Loop, UnlabeledInitialDataStartsWithLabel) {
  std::string id;
  {
    auto cfg = loop_config(world_);
    cfg.initial_data = iterforge::select(platform_->assets(), world_.superset,
                              {*ids_of(world_.superset).begin()}, "one");
    id = engine().create_project(cfg);
  }
  IterationState s = engine().get(id);
  EXPECT_EQ(s.stage, IterStage::kLabel);
  s = step(id);
  ASSERT_EQ(s.stage, IterStage::kTrain) << s.stage_error;
  EXPECT_EQ(platform_->assets().snapshot(*s.training_data)->labeled_count(), 1u);
}

TEST_F(Loop, StatePersistsAcrossReopen) {
  std::string id = engine().create_project(loop_config(world_, 0.999));
  step(id);
  engine().advance(id);
  IterationState before = engine().get(id);
  platform_->shutdown();
  platform_.reset();
  platform_ = Platform::open(test_config(dir_ / "store"));
  IterationState after = engine().get(id);
  EXPECT_EQ(after.round, before.round);
  EXPECT_EQ(after.stage, before.stage);
  EXPECT_EQ(after.history, before.history);
  EXPECT_EQ(after.current_model, before.current_model);
  EXPECT_EQ(engine().audit(id).size(), 4u);
  EXPECT_NE(engine().create_project(loop_config(world_)), id);
}
