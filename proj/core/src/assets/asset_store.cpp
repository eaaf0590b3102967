#include "iterforge/assets/asset_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <deque>
#include <set>

#include "codec.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/time.hpp"

namespace iterforge {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x50414e53;  // "SNAP"

std::FILE* open_append(const fs::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (f == nullptr) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return f;
}

void append_bytes(std::FILE* f, std::string_view bytes, bool sync) {
  if (std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size() || std::fflush(f) != 0) {
    throw Error(ErrorCode::kIo, "log append failed");
  }
  if (sync) ::fsync(::fileno(f));
}

std::string encode_snapshot(const DatasetSnapshot& s) {
  codec::Writer w;
  w.str(s.id().value);
  w.str(s.provenance());
  w.i64(s.created_ms());
  w.u32(static_cast<std::uint32_t>(s.parents().size()));
  for (const auto& p : s.parents()) w.str(p.value);
  w.u32(static_cast<std::uint32_t>(s.class_names().size()));
  for (const auto& c : s.class_names()) w.str(c);
  w.u64(s.size());
  for (const auto& id : s.index().ids()) {
    w.bytes(codec::hex_to_raw(id.hex()));
    const auto& anns = *s.annotations(id);
    w.u32(static_cast<std::uint32_t>(anns.size()));
    for (const auto& a : anns) {
      w.u32(a.class_id);
      w.f64(a.x_min);
      w.f64(a.y_min);
      w.f64(a.x_max);
      w.f64(a.y_max);
    }
  }
  std::string payload = w.take();
  codec::Writer frame;
  frame.u32(kSnapshotMagic);
  frame.u32(static_cast<std::uint32_t>(payload.size()));
  frame.bytes(payload);
  frame.u32(codec::checksum(payload));
  return frame.take();
}

SnapshotPtr decode_snapshot(std::string_view payload) {
  codec::Reader r(payload);
  SnapshotId id{r.str()};
  std::string provenance = r.str();
  std::int64_t created = r.i64();
  std::vector<SnapshotId> parents(r.u32());
  for (auto& p : parents) p.value = r.str();
  std::vector<std::string> classes(r.u32());
  for (auto& c : classes) c = r.str();
  std::vector<SnapshotEntry> entries(r.u64());
  for (auto& e : entries) {
    e.id = AssetId::from_hex(codec::raw_to_hex(r.bytes(32)));
    e.annotations.resize(r.u32());
    for (auto& a : e.annotations) {
      a.class_id = r.u32();
      a.x_min = r.f64();
      a.y_min = r.f64();
      a.x_max = r.f64();
      a.y_max = r.f64();
    }
  }
  return std::make_shared<const DatasetSnapshot>(std::move(id), std::move(parents),
                                                 std::move(provenance), std::move(classes),
                                                 created, std::move(entries));
}

std::string encode_asset(const AssetRecord& rec) {
  codec::Writer w;
  w.bytes(codec::hex_to_raw(rec.id.hex()));
  w.u64(rec.byte_size);
  w.i64(rec.import_time_ms);
  w.str(rec.source_name);
  std::string payload = w.take();
  codec::Writer frame;
  frame.u32(static_cast<std::uint32_t>(payload.size()));
  frame.bytes(payload);
  frame.u32(codec::checksum(payload));
  return frame.take();
}

// Reads one framed snapshot payload at |offset| from |data|; returns the
// payload and the frame length, or nullopt if the frame is torn or corrupt.
std::optional<std::pair<std::string_view, std::size_t>> frame_at(std::string_view data,
                                                                 std::size_t offset) {
  if (data.size() < offset + 8) return std::nullopt;
  codec::Reader r(data.substr(offset));
  if (r.u32() != kSnapshotMagic) return std::nullopt;
  std::uint32_t len = r.u32();
  if (data.size() < offset + 8 + len + 4) return std::nullopt;
  std::string_view payload = data.substr(offset + 8, len);
  std::uint32_t sum;
  std::memcpy(&sum, data.data() + offset + 8 + len, 4);
  if (sum != codec::checksum(payload)) return std::nullopt;
  return std::make_pair(payload, static_cast<std::size_t>(8 + len + 4));
}

}  // namespace

AssetStore::AssetStore(AssetStoreOptions options) : options_(std::move(options)) {
  std::error_code ec;
  fs::create_directories(options_.root / "blobs", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create store root " + options_.root.string());
  load_assets();
  load_snapshot_index();
  assets_log_ = open_append(options_.root / "assets.log");
  snapshot_log_ = open_append(options_.root / "snapshots.log");
  snapshot_idx_ = open_append(options_.root / "snapshots.idx");
}

AssetStore::~AssetStore() {
  if (assets_log_) std::fclose(assets_log_);
  if (snapshot_log_) std::fclose(snapshot_log_);
  if (snapshot_idx_) std::fclose(snapshot_idx_);
}

void AssetStore::load_assets() {
  fs::path path = options_.root / "assets.log";
  if (!fs::exists(path)) return;
  std::string data = read_file(path);
  std::size_t pos = 0;
  while (pos + 4 <= data.size()) {
    std::uint32_t len;
    std::memcpy(&len, data.data() + pos, 4);
    if (data.size() < pos + 4 + len + 4) break;
    std::string_view payload(data.data() + pos + 4, len);
    std::uint32_t sum;
    std::memcpy(&sum, data.data() + pos + 4 + len, 4);
    if (sum != codec::checksum(payload)) break;
    codec::Reader r(payload);
    AssetRecord rec;
    rec.id = AssetId::from_hex(codec::raw_to_hex(r.bytes(32)));
    rec.byte_size = r.u64();
    rec.import_time_ms = r.i64();
    rec.source_name = r.str();
    assets_.insert_or_assign(rec.id, std::move(rec));
    pos += 4 + len + 4;
  }
  if (pos != data.size()) fs::resize_file(path, pos);
}

void AssetStore::load_snapshot_index() {
  fs::path log_path = options_.root / "snapshots.log";
  fs::path idx_path = options_.root / "snapshots.idx";
  std::string log = fs::exists(log_path) ? read_file(log_path) : std::string();
  std::string idx = fs::exists(idx_path) ? read_file(idx_path) : std::string();

  // Trust index entries whose frames verify; rescan the log past the last one.
  std::size_t scan_from = 0;
  {
    codec::Reader r(idx);
    try {
      while (!r.done()) {
        SnapshotId id{r.str()};
        std::uint64_t off = r.u64();
        auto frame = frame_at(log, off);
        if (!frame) break;
        snapshot_offsets_[id] = off;
        snapshot_ids_.observe(id.value);
        scan_from = std::max<std::size_t>(scan_from, off + frame->second);
      }
    } catch (const Error&) {
    }
  }
  // Rewrite the index from the verified entries plus anything the log has
  // beyond them, then truncate a torn log tail.
  std::vector<std::pair<SnapshotId, std::uint64_t>> extra;
  std::size_t pos = scan_from;
  while (auto frame = frame_at(log, pos)) {
    codec::Reader r(frame->first);
    SnapshotId id{r.str()};
    if (!snapshot_offsets_.contains(id)) extra.emplace_back(id, pos);
    snapshot_offsets_[id] = pos;
    snapshot_ids_.observe(id.value);
    pos += frame->second;
  }
  if (pos != log.size()) fs::resize_file(log_path, pos);
  snapshot_log_size_ = pos;

  std::vector<std::pair<std::uint64_t, SnapshotId>> ordered;
  for (const auto& [id, off] : snapshot_offsets_) ordered.emplace_back(off, id);
  std::sort(ordered.begin(), ordered.end());
  codec::Writer w;
  for (const auto& [off, id] : ordered) {
    w.str(id.value);
    w.u64(off);
  }
  if (w.data() != idx) write_file_atomic(idx_path, w.data());
}

AssetId AssetStore::put_asset(std::string_view bytes, std::string_view source_name) {
  if (bytes.empty() && !options_.allow_empty_assets) {
    throw Error(ErrorCode::kInvalidArgument, "empty asset rejected: " + std::string(source_name));
  }
  AssetId id = AssetId::of_bytes(bytes);
  std::lock_guard write(write_mu_);
  {
    std::shared_lock read(state_mu_);
    if (assets_.contains(id)) return id;
  }
  fs::path path = blob_path(id);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + path.parent_path().string());
  write_file_atomic(path, bytes);
  AssetRecord rec{id, bytes.size(), std::string(source_name), now_ms()};
  append_bytes(assets_log_, encode_asset(rec), options_.sync_writes);
  std::unique_lock lock(state_mu_);
  assets_.emplace(id, std::move(rec));
  return id;
}

bool AssetStore::contains_asset(const AssetId& id) const {
  std::shared_lock lock(state_mu_);
  return assets_.contains(id);
}

std::optional<AssetRecord> AssetStore::asset_record(const AssetId& id) const {
  std::shared_lock lock(state_mu_);
  auto it = assets_.find(id);
  if (it == assets_.end()) return std::nullopt;
  return it->second;
}

std::string AssetStore::read_asset(const AssetId& id) const {
  if (!contains_asset(id)) throw Error(ErrorCode::kNotFound, "unknown asset " + id.hex());
  return read_file(blob_path(id));
}

fs::path AssetStore::blob_path(const AssetId& id) const {
  return options_.root / "blobs" / std::string(id.shard()) / id.hex();
}

std::size_t AssetStore::blob_count() const {
  std::shared_lock lock(state_mu_);
  return assets_.size();
}

SnapshotId AssetStore::commit_snapshot(const std::vector<SnapshotId>& parent_ids,
                                       std::vector<SnapshotEntry> entries,
                                       std::string provenance,
                                       std::vector<std::string> class_names) {
  std::lock_guard write(write_mu_);
  {
    std::shared_lock read(state_mu_);
    for (const auto& p : parent_ids) {
      if (!snapshot_offsets_.contains(p)) {
        throw Error(ErrorCode::kNotFound, "unknown parent snapshot " + p.value);
      }
    }
    for (const auto& e : entries) {
      if (!assets_.contains(e.id)) {
        throw Error(ErrorCode::kIntegrity, "snapshot references unstored asset " + e.id.hex());
      }
      for (const auto& a : e.annotations) {
        if (a.class_id >= class_names.size()) {
          throw Error(ErrorCode::kInvalidArgument,
                      "class id " + std::to_string(a.class_id) + " outside class list");
        }
        if (!(a.x_min <= a.x_max) || !(a.y_min <= a.y_max)) {
          throw Error(ErrorCode::kInvalidArgument, "inverted box on asset " + e.id.hex());
        }
      }
    }
  }
  SnapshotId id{snapshot_ids_.next()};
  // The constructor rejects duplicate asset ids.
  auto snap = std::make_shared<const DatasetSnapshot>(id, parent_ids, std::move(provenance),
                                                      std::move(class_names), now_ms(),
                                                      std::move(entries));
  std::string frame = encode_snapshot(*snap);
  std::uint64_t offset = snapshot_log_size_;
  append_bytes(snapshot_log_, frame, options_.sync_writes);
  snapshot_log_size_ += frame.size();
  append_index(id, offset);
  {
    std::unique_lock lock(state_mu_);
    snapshot_offsets_[id] = offset;
  }
  std::lock_guard cache(cache_mu_);
  snapshot_cache_[id] = std::move(snap);
  return id;
}

void AssetStore::append_index(const SnapshotId& id, std::uint64_t offset) {
  codec::Writer w;
  w.str(id.value);
  w.u64(offset);
  append_bytes(snapshot_idx_, w.data(), options_.sync_writes);
}

SnapshotPtr AssetStore::load_snapshot_at(std::uint64_t offset) const {
  int fd = ::open((options_.root / "snapshots.log").c_str(), O_RDONLY | O_CLOEXEC);
  if (fd < 0) throw Error(ErrorCode::kIo, "cannot open snapshot log");
  auto read_exact = [&](std::uint64_t at, std::size_t n) {
    std::string buf(n, '\0');
    std::size_t got = 0;
    while (got < n) {
      ssize_t r = ::pread(fd, buf.data() + got, n - got, static_cast<off_t>(at + got));
      if (r <= 0) {
        ::close(fd);
        throw Error(ErrorCode::kIntegrity, "snapshot log truncated");
      }
      got += static_cast<std::size_t>(r);
    }
    return buf;
  };
  std::string header = read_exact(offset, 8);
  std::uint32_t len;
  std::memcpy(&len, header.data() + 4, 4);
  std::string body = read_exact(offset, 8 + len + 4);
  ::close(fd);
  auto frame = frame_at(body, 0);
  if (!frame) throw Error(ErrorCode::kIntegrity, "corrupt snapshot record");
  return decode_snapshot(frame->first);
}

SnapshotPtr AssetStore::snapshot(const SnapshotId& id) const {
  {
    std::lock_guard cache(cache_mu_);
    auto it = snapshot_cache_.find(id);
    if (it != snapshot_cache_.end()) return it->second;
  }
  std::uint64_t offset;
  {
    std::shared_lock lock(state_mu_);
    auto it = snapshot_offsets_.find(id);
    if (it == snapshot_offsets_.end()) throw Error(ErrorCode::kNotFound, "unknown snapshot " + id.value);
    offset = it->second;
  }
  SnapshotPtr snap = load_snapshot_at(offset);
  std::lock_guard cache(cache_mu_);
  return snapshot_cache_.try_emplace(id, std::move(snap)).first->second;
}

bool AssetStore::has_snapshot(const SnapshotId& id) const {
  std::shared_lock lock(state_mu_);
  return snapshot_offsets_.contains(id);
}

std::vector<SnapshotId> AssetStore::list_snapshots() const {
  std::shared_lock lock(state_mu_);
  std::vector<SnapshotId> out;
  out.reserve(snapshot_offsets_.size());
  for (const auto& [id, off] : snapshot_offsets_) out.push_back(id);
  return out;
}

AssetDetail AssetStore::get_asset_detail(const SnapshotId& snapshot_id, const AssetId& id) const {
  SnapshotPtr snap = snapshot(snapshot_id);
  const Annotations* anns = snap->annotations(id);
  if (anns == nullptr) {
    throw Error(ErrorCode::kNotFound, "asset " + id.hex() + " not in snapshot " + snapshot_id.value);
  }
  auto rec = asset_record(id);
  if (!rec) throw Error(ErrorCode::kIntegrity, "snapshot references unstored asset " + id.hex());
  return {std::move(*rec), *anns};
}

std::vector<AssetDetail> AssetStore::list_page(const SnapshotId& snapshot_id, std::size_t offset,
                                               std::size_t limit) const {
  if (limit == 0) throw Error(ErrorCode::kInvalidArgument, "page limit must be positive");
  SnapshotPtr snap = snapshot(snapshot_id);
  auto ids = snap->index().ids();
  std::vector<AssetDetail> out;
  if (offset >= ids.size()) return out;
  std::size_t end = std::min(ids.size(), offset + limit);
  out.reserve(end - offset);
  std::shared_lock lock(state_mu_);
  for (std::size_t i = offset; i < end; ++i) {
    auto it = assets_.find(ids[i]);
    if (it == assets_.end()) throw Error(ErrorCode::kIntegrity, "unstored asset " + ids[i].hex());
    out.push_back({it->second, *snap->annotations(ids[i])});
  }
  return out;
}

std::vector<SnapshotId> AssetStore::lineage(const SnapshotId& id) const {
  std::vector<SnapshotId> out;
  std::set<SnapshotId> seen{id};
  std::deque<SnapshotId> queue{id};
  while (!queue.empty()) {
    SnapshotId cur = std::move(queue.front());
    queue.pop_front();
    auto snap = snapshot(cur);
    out.push_back(cur);
    for (const auto& p : snap->parents()) {
      if (seen.insert(p).second) queue.push_back(p);
    }
  }
  return out;
}

}  // namespace iterforge
