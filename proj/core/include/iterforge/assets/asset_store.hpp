#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iterforge/assets/types.hpp"
#include "iterforge/common/ids.hpp"

namespace iterforge {

struct AssetStoreOptions {
  std::filesystem::path root;
  bool allow_empty_assets = false;
  bool sync_writes = false;  // fsync blobs and logs on every write
};

struct AssetDetail {
  AssetRecord record;
  Annotations annotations;

  friend bool operator==(const AssetDetail&, const AssetDetail&) = default;
};

// Content-addressed blob store plus an append-only snapshot log.
//
// On-disk layout under |root|:
//   blobs/<first 2 hex>/<asset id>   raw asset bytes
//   assets.log                       one binary AssetRecord per stored blob
//   snapshots.log                    one binary record per committed snapshot
//   snapshots.idx                    (snapshot id, log offset) pairs
//
// Readers run concurrently. Writes (puts and commits) are serialized.
class AssetStore {
 public:
  explicit AssetStore(AssetStoreOptions options);
  ~AssetStore();
  AssetStore(const AssetStore&) = delete;
  AssetStore& operator=(const AssetStore&) = delete;

  const std::filesystem::path& root() const { return options_.root; }

  // Stores |bytes| under its content address. Re-putting identical bytes
  // returns the same id and writes nothing.
  AssetId put_asset(std::string_view bytes, std::string_view source_name);

  bool contains_asset(const AssetId& id) const;
  std::optional<AssetRecord> asset_record(const AssetId& id) const;
  std::string read_asset(const AssetId& id) const;
  std::filesystem::path blob_path(const AssetId& id) const;
  std::size_t blob_count() const;

  SnapshotId commit_snapshot(const std::vector<SnapshotId>& parent_ids,
                             std::vector<SnapshotEntry> entries, std::string provenance,
                             std::vector<std::string> class_names);

  // Throws Error(kNotFound) for unknown ids.
  SnapshotPtr snapshot(const SnapshotId& id) const;
  bool has_snapshot(const SnapshotId& id) const;
  std::vector<SnapshotId> list_snapshots() const;

  AssetDetail get_asset_detail(const SnapshotId& snapshot, const AssetId& id) const;
  std::vector<AssetDetail> list_page(const SnapshotId& snapshot, std::size_t offset,
                                     std::size_t limit) const;

  // Breadth-first walk over parent links, starting with |id| itself.
  std::vector<SnapshotId> lineage(const SnapshotId& id) const;

 private:
  void load_assets();
  void load_snapshot_index();
  SnapshotPtr load_snapshot_at(std::uint64_t offset) const;
  void append_index(const SnapshotId& id, std::uint64_t offset);

  AssetStoreOptions options_;
  IdSequence snapshot_ids_{"ds"};

  mutable std::shared_mutex state_mu_;
  std::mutex write_mu_;
  std::unordered_map<AssetId, AssetRecord> assets_;
  std::map<SnapshotId, std::uint64_t> snapshot_offsets_;
  mutable std::unordered_map<SnapshotId, SnapshotPtr> snapshot_cache_;
  mutable std::mutex cache_mu_;

  std::FILE* assets_log_ = nullptr;
  std::FILE* snapshot_log_ = nullptr;
  std::FILE* snapshot_idx_ = nullptr;
  std::uint64_t snapshot_log_size_ = 0;
};

}  // namespace iterforge
