#include <benchmark/benchmark.h>

#include <random>

#include "bench_common.hpp"

using namespace iterforge;
using iterforge::bench::ScratchDir;

namespace {

void BM_PutAssetNew(benchmark::State& state) {
  ScratchDir dir;
  AssetStore store({dir.path() / "store"});
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(store.put_asset("payload-" + std::to_string(i++), "bench"));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PutAssetNew);

void BM_PutAssetDuplicate(benchmark::State& state) {
  ScratchDir dir;
  AssetStore store({dir.path() / "store"});
  store.put_asset("same bytes", "bench");
  for (auto _ : state) benchmark::DoNotOptimize(store.put_asset("same bytes", "bench"));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PutAssetDuplicate);

void BM_CommitSnapshot(benchmark::State& state) {
  ScratchDir dir;
  AssetStore store({dir.path() / "store"});
  auto ids = bench::fill(store, static_cast<std::size_t>(state.range(0)));
  auto rows = bench::entries(ids, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(store.commit_snapshot({}, rows, "bench", {"a", "b", "c", "d"}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CommitSnapshot)->Arg(1000)->Arg(10000);

void BM_GetAssetDetail(benchmark::State& state) {
  ScratchDir dir;
  SnapshotId snap;
  std::vector<AssetId> ids;
  {
    AssetStore writer({dir.path() / "store"});
    ids = bench::fill(writer, static_cast<std::size_t>(state.range(0)));
    snap = writer.commit_snapshot({}, bench::entries(ids, 4), "bench", {"a", "b", "c", "d"});
  }
  AssetStore store({dir.path() / "store"});
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  for (auto _ : state) benchmark::DoNotOptimize(store.get_asset_detail(snap, ids[pick(rng)]));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_GetAssetDetail)->Arg(1000)->Arg(10000);

void BM_ListPage(benchmark::State& state) {
  ScratchDir dir;
  AssetStore store({dir.path() / "store"});
  auto ids = bench::fill(store, 10000);
  SnapshotId snap = store.commit_snapshot({}, bench::entries(ids, 4), "bench", {"a", "b", "c", "d"});
  std::size_t offset = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(store.list_page(snap, offset, static_cast<std::size_t>(state.range(0))));
    offset = (offset + 997) % ids.size();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ListPage)->Arg(50)->Arg(1000);

void BM_ReopenStore(benchmark::State& state) {
  ScratchDir dir;
  {
    AssetStore writer({dir.path() / "store"});
    auto ids = bench::fill(writer, static_cast<std::size_t>(state.range(0)));
    for (int s = 0; s < 10; ++s) writer.commit_snapshot({}, bench::entries(ids, 4), "bench", {"a", "b", "c", "d"});
  }
  for (auto _ : state) {
    AssetStore store({dir.path() / "store"});
    benchmark::DoNotOptimize(store.blob_count());
  }
}
BENCHMARK(BM_ReopenStore)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
