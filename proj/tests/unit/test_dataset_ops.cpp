#include <gtest/gtest.h>

#include <random>
#include <set>

#include "iterforge/assets/dataset_ops.hpp"
#include "iterforge/common/error.hpp"
#include "test_support.hpp"

using namespace iterforge;
using iterforge::testing::TempDir;

namespace {

AnnotationObject box(std::uint32_t cls, double x = 0) {
  AnnotationObject a;
  a.class_id = cls;
  a.x_min = x;
  a.x_max = x + 1;
  a.y_max = 1;
  return a;
}

class DatasetOps : public ::testing::Test {
 protected:
  DatasetOps() : store_({dir_ / "store"}) {
    for (int i = 0; i < 6; ++i) ids_.push_back(store_.put_asset("asset" + std::to_string(i), "f"));
  }

  std::set<AssetId> ids_in(const SnapshotId& s) {
    auto snap = store_.snapshot(s);
    return {snap->index().ids().begin(), snap->index().ids().end()};
  }

  ErrorCode code_of(const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::kInternal;
  }

  TempDir dir_;
  AssetStore store_;
  std::vector<AssetId> ids_;
};

}  // namespace

TEST_F(DatasetOps, FilterIncludeExcludeLabeledOnly) {
  SnapshotId s = store_.commit_snapshot(
      {}, {{ids_[0], {box(0)}}, {ids_[1], {box(1)}}, {ids_[2], {box(0), box(1)}}, {ids_[3], {}}}, "t",
      {"cat", "dog"});
  FilterSpec inc;
  inc.include_classes = std::set<std::string>{"cat"};
  EXPECT_EQ(ids_in(filter(store_, s, inc)), (std::set<AssetId>{ids_[0], ids_[2]}));

  FilterSpec exc;
  exc.exclude_classes = std::set<std::string>{"dog"};
  SnapshotId e = filter(store_, s, exc);
  EXPECT_EQ(ids_in(e), (std::set<AssetId>{ids_[0], ids_[2], ids_[3]}));
  EXPECT_EQ(store_.snapshot(e)->annotations(ids_[2])->size(), 1u);

  FilterSpec lab;
  lab.labeled_only = true;
  EXPECT_EQ(ids_in(filter(store_, s, lab)), (std::set<AssetId>{ids_[0], ids_[1], ids_[2]}));

  auto out = store_.snapshot(filter(store_, s, lab, "mine"));
  EXPECT_EQ(out->parents(), std::vector<SnapshotId>{s});
  EXPECT_EQ(out->provenance(), "mine");
}

TEST_F(DatasetOps, FilterRefusesIdentityAndUnknownClasses) {
  SnapshotId s = store_.commit_snapshot({}, {{ids_[0], {box(0)}}}, "t", {"cat"});
  EXPECT_EQ(code_of([&] { filter(store_, s, FilterSpec{}); }), ErrorCode::kInvalidArgument);
  FilterSpec empty_sets;
  empty_sets.include_classes.emplace();
  empty_sets.exclude_classes.emplace();
  EXPECT_EQ(code_of([&] { filter(store_, s, empty_sets); }), ErrorCode::kInvalidArgument);
  FilterSpec unknown;
  unknown.include_classes = std::set<std::string>{"zebra"};
  EXPECT_EQ(code_of([&] { filter(store_, s, unknown); }), ErrorCode::kInvalidArgument);
}

TEST_F(DatasetOps, MergeStrategiesResolveOverlap) {
  SnapshotId a = store_.commit_snapshot({}, {{ids_[0], {box(0)}}, {ids_[1], {box(0)}}}, "t", {"cat", "dog"});
  SnapshotId b = store_.commit_snapshot({}, {{ids_[1], {box(1)}}, {ids_[2], {}}}, "t", {"cat", "dog"});
  auto left = store_.snapshot(merge(store_, a, b, MergeStrategy::kPreferLeft));
  EXPECT_EQ(left->size(), 3u);
  EXPECT_EQ((*left->annotations(ids_[1]))[0].class_id, 0u);
  EXPECT_EQ(left->parents(), (std::vector<SnapshotId>{a, b}));
  auto right = store_.snapshot(merge(store_, a, b, MergeStrategy::kPreferRight));
  EXPECT_EQ((*right->annotations(ids_[1]))[0].class_id, 1u);
  auto both = store_.snapshot(merge(store_, a, b, MergeStrategy::kUnionAnnotations));
  EXPECT_EQ(both->annotations(ids_[1])->size(), 2u);
  auto self = store_.snapshot(merge(store_, a, a, MergeStrategy::kUnionAnnotations));
  EXPECT_EQ(self->annotations(ids_[0])->size(), 1u);
}

TEST_F(DatasetOps, MergeClassListCompatibility) {
  SnapshotId short_list = store_.commit_snapshot({}, {{ids_[0], {box(0)}}}, "t", {"cat"});
  SnapshotId long_list = store_.commit_snapshot({}, {{ids_[1], {box(1)}}}, "t", {"cat", "dog"});
  SnapshotId other = store_.commit_snapshot({}, {{ids_[2], {box(0)}}}, "t", {"dog"});
  EXPECT_EQ(store_.snapshot(merge(store_, short_list, long_list, MergeStrategy::kPreferLeft))->class_names(),
            (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(code_of([&] { merge(store_, short_list, other, MergeStrategy::kPreferLeft); }),
            ErrorCode::kFailedPrecondition);
  auto remapped = store_.snapshot(merge(store_, short_list, other, MergeStrategy::kPreferLeft, true));
  EXPECT_EQ(remapped->class_names(), (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ((*remapped->annotations(ids_[2]))[0].class_id, 1u);
}

TEST_F(DatasetOps, IntersectAndExcludeKeepLeftAnnotations) {
  SnapshotId a = store_.commit_snapshot({}, {{ids_[0], {box(0)}}, {ids_[1], {box(1)}}}, "t", {"cat", "dog"});
  SnapshotId b = store_.commit_snapshot({}, {{ids_[1], {box(0)}}, {ids_[2], {}}}, "t", {"dog"});
  auto i = store_.snapshot(intersect(store_, a, b));
  EXPECT_EQ(i->size(), 1u);
  EXPECT_EQ((*i->annotations(ids_[1]))[0].class_id, 1u);
  EXPECT_EQ(i->class_names(), (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(ids_in(exclude(store_, a, b)), std::set<AssetId>{ids_[0]});
  EXPECT_TRUE(store_.snapshot(exclude(store_, a, a))->empty());
}

TEST_F(DatasetOps, SelectKeepsRequestedOrder) {
  SnapshotId s = store_.commit_snapshot({}, {{ids_[0], {}}, {ids_[1], {box(0)}}, {ids_[2], {}}}, "t", {"c"});
  auto sel = store_.snapshot(select(store_, s, {ids_[2], ids_[1]}, "mined"));
  ASSERT_EQ(sel->size(), 2u);
  EXPECT_EQ(sel->index().ids()[0], ids_[2]);
  EXPECT_EQ(sel->annotations(ids_[1])->size(), 1u);
  EXPECT_EQ(code_of([&] { select(store_, s, {ids_[5]}, "x"); }), ErrorCode::kNotFound);
}

TEST_F(DatasetOps, RunDatasetOpParsesRequests) {
  SnapshotId a = store_.commit_snapshot({}, {{ids_[0], {box(0)}}, {ids_[1], {}}}, "t", {"cat"});
  SnapshotId b = store_.commit_snapshot({}, {{ids_[1], {}}}, "t", {"cat"});
  EXPECT_EQ(ids_in(run_dataset_op(store_, {{"op", "exclude"}, {"a", a.value}, {"b", b.value}})),
            std::set<AssetId>{ids_[0]});
  EXPECT_EQ(ids_in(run_dataset_op(store_, {{"op", "filter"}, {"snapshot", a.value}, {"labeled_only", true}})),
            std::set<AssetId>{ids_[0]});
  EXPECT_EQ(store_.snapshot(run_dataset_op(
                                store_, {{"op", "merge"}, {"a", a.value}, {"b", b.value}, {"strategy", "union-annotations"}}))
                ->size(),
            2u);
  EXPECT_EQ(code_of([&] { run_dataset_op(store_, {{"op", "shuffle"}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { run_dataset_op(store_, {{"op", "intersect"}, {"a", a.value}}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { run_dataset_op(store_, {{"a", a.value}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { run_dataset_op(store_, {{"op", "intersect"}, {"a", a.value}, {"b", "ds-999"}}); }),
            ErrorCode::kNotFound);
}

// Set-algebra identities hold for random snapshots.
TEST_F(DatasetOps, AlgebraicIdentitiesOnRandomSnapshots) {
  std::vector<AssetId> pool;
  for (int i = 0; i < 24; ++i) pool.push_back(store_.put_asset("p" + std::to_string(i), "p"));
  std::mt19937_64 rng(99);
  auto random_snap = [&] {
    std::vector<SnapshotEntry> e;
    for (const auto& id : pool) {
      if (rng() % 2) e.push_back({id, rng() % 3 ? Annotations{box(rng() % 2)} : Annotations{}});
    }
    return store_.commit_snapshot({}, e, "r", {"a", "b"});
  };
  for (int trial = 0; trial < 60; ++trial) {
    SnapshotId a = random_snap(), b = random_snap();
    auto ab = ids_in(merge(store_, a, b, MergeStrategy::kPreferLeft));
    auto ba = ids_in(merge(store_, b, a, MergeStrategy::kPreferLeft));
    EXPECT_EQ(ab, ba);
    auto i = ids_in(intersect(store_, a, b));
    auto x = ids_in(exclude(store_, a, b));
    std::set<AssetId> rebuilt = i;
    rebuilt.insert(x.begin(), x.end());
    EXPECT_EQ(rebuilt, ids_in(a));
    for (const auto& id : i) EXPECT_FALSE(x.contains(id));
    EXPECT_EQ(ids_in(intersect(store_, a, b)), ids_in(intersect(store_, b, a)));
    auto merged = store_.snapshot(merge(store_, a, b, MergeStrategy::kPreferRight));
    auto right = store_.snapshot(b);
    for (const auto& id : right->index().ids()) EXPECT_EQ(*merged->annotations(id), *right->annotations(id));
  }
}
