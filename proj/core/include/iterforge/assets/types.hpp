#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iterforge {

// SHA-256 of an asset's raw bytes, as 64 lowercase hex characters.
class AssetId {
 public:
  AssetId() = default;

  static AssetId of_bytes(std::string_view bytes);
  // Throws Error(kInvalidArgument) unless |hex| is 64 lowercase hex chars.
  static AssetId from_hex(std::string_view hex);
  static bool is_valid_hex(std::string_view hex);

  const std::string& hex() const { return hex_; }
  std::string_view shard() const { return std::string_view(hex_).substr(0, 2); }
  bool empty() const { return hex_.empty(); }

  friend auto operator<=>(const AssetId&, const AssetId&) = default;

 private:
  explicit AssetId(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

struct SnapshotId {
  std::string value;

  friend auto operator<=>(const SnapshotId&, const SnapshotId&) = default;
};

struct ModelId {
  std::string value;

  friend auto operator<=>(const ModelId&, const ModelId&) = default;
};

struct AnnotationObject {
  std::uint32_t class_id = 0;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  friend bool operator==(const AnnotationObject&, const AnnotationObject&) = default;
};

using Annotations = std::vector<AnnotationObject>;

struct AssetRecord {
  AssetId id;
  std::uint64_t byte_size = 0;
  std::string source_name;
  std::int64_t import_time_ms = 0;

  friend bool operator==(const AssetRecord&, const AssetRecord&) = default;
};

struct SnapshotEntry {
  AssetId id;
  Annotations annotations;  // empty = unlabeled

  friend bool operator==(const SnapshotEntry&, const SnapshotEntry&) = default;
};

}  // namespace iterforge

template <>
struct std::hash<iterforge::AssetId> {
  std::size_t operator()(const iterforge::AssetId& id) const noexcept {
    return std::hash<std::string>{}(id.hex());
  }
};

template <>
struct std::hash<iterforge::SnapshotId> {
  std::size_t operator()(const iterforge::SnapshotId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};

namespace iterforge {

// Paging array plus keyed detail map over the same key set. Lookups by id go
// through the map and never scan the array.
class AssetIndex {
 public:
  // Throws Error(kInvalidArgument) on a duplicate id.
  void append(const AssetId& id, Annotations annotations);

  std::span<const AssetId> ids() const { return id_array_; }
  const Annotations* find(const AssetId& id) const;
  bool contains(const AssetId& id) const { return detail_map_.contains(id); }
  std::size_t size() const { return id_array_.size(); }

 private:
  std::vector<AssetId> id_array_;
  std::unordered_map<AssetId, Annotations> detail_map_;
};

class DatasetSnapshot {
 public:
  DatasetSnapshot(SnapshotId id, std::vector<SnapshotId> parents, std::string provenance,
                  std::vector<std::string> class_names, std::int64_t created_ms,
                  std::vector<SnapshotEntry> entries);

  const SnapshotId& id() const { return id_; }
  const std::vector<SnapshotId>& parents() const { return parents_; }
  const std::string& provenance() const { return provenance_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::int64_t created_ms() const { return created_ms_; }

  const AssetIndex& index() const { return index_; }
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.size() == 0; }
  bool contains(const AssetId& id) const { return index_.contains(id); }
  const Annotations* annotations(const AssetId& id) const { return index_.find(id); }

  // Materialized (id, annotations) pairs in paging order.
  std::vector<SnapshotEntry> entries() const;
  std::size_t labeled_count() const;

  // SHA-256 over the ordered entries and class names. Stable for the
  // snapshot's lifetime.
  std::string content_digest() const;

 private:
  SnapshotId id_;
  std::vector<SnapshotId> parents_;
  std::string provenance_;
  std::vector<std::string> class_names_;
  std::int64_t created_ms_ = 0;
  AssetIndex index_;
};

using SnapshotPtr = std::shared_ptr<const DatasetSnapshot>;

}  // namespace iterforge
