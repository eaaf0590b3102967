#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "iterforge/assets/dataset_ops.hpp"

using namespace iterforge;
using iterforge::bench::ScratchDir;

namespace {

const std::vector<std::string> kClasses = {"a", "b", "c", "d"};

// Two overlapping snapshots: a = ids[0, n), b = ids[n/2, 3n/2).
struct Pair {
  Pair(std::size_t n) : store({dir.path() / "store"}) {
    auto ids = bench::fill(store, n + n / 2);
    std::vector<AssetId> left(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<AssetId> right(ids.begin() + static_cast<std::ptrdiff_t>(n / 2), ids.end());
    a = store.commit_snapshot({}, bench::entries(left, 4), "bench", kClasses);
    b = store.commit_snapshot({}, bench::entries(right, 4), "bench", kClasses);
  }
  ScratchDir dir;
  AssetStore store;
  SnapshotId a, b;
};

void BM_FilterInclude(benchmark::State& state) {
  Pair p(static_cast<std::size_t>(state.range(0)));
  FilterSpec spec;
  spec.include_classes = std::set<std::string>{"a", "c"};
  for (auto _ : state) benchmark::DoNotOptimize(filter(p.store, p.a, spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FilterInclude)->Arg(1000)->Arg(10000);

void BM_FilterLabeledOnly(benchmark::State& state) {
  Pair p(static_cast<std::size_t>(state.range(0)));
  FilterSpec spec;
  spec.labeled_only = true;
  for (auto _ : state) benchmark::DoNotOptimize(filter(p.store, p.a, spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FilterLabeledOnly)->Arg(10000);

void BM_Merge(benchmark::State& state) {
  Pair p(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(merge(p.store, p.a, p.b, MergeStrategy::kUnionAnnotations));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Merge)->Arg(1000)->Arg(10000);

void BM_Intersect(benchmark::State& state) {
  Pair p(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(intersect(p.store, p.a, p.b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Intersect)->Arg(10000);

void BM_Exclude(benchmark::State& state) {
  Pair p(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(exclude(p.store, p.a, p.b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Exclude)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
