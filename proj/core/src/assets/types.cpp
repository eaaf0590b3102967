#include "iterforge/assets/types.hpp"

#include "codec.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/sha256.hpp"

namespace iterforge {

namespace codec {

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}
}  // namespace

std::string hex_to_raw(std::string_view hex) {
  std::string out(hex.size() / 2, '\0');
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<char>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return out;
}

std::string raw_to_hex(std::string_view raw) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(raw.size() * 2);
  for (unsigned char c : raw) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xf]);
  }
  return out;
}

}  // namespace codec

AssetId AssetId::of_bytes(std::string_view bytes) { return AssetId(sha256_hex(bytes)); }

bool AssetId::is_valid_hex(std::string_view hex) {
  if (hex.size() != 64) return false;
  for (char c : hex) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

AssetId AssetId::from_hex(std::string_view hex) {
  if (!is_valid_hex(hex)) {
    throw Error(ErrorCode::kInvalidArgument, "malformed asset id: " + std::string(hex));
  }
  return AssetId(std::string(hex));
}

void AssetIndex::append(const AssetId& id, Annotations annotations) {
  auto [it, inserted] = detail_map_.emplace(id, std::move(annotations));
  if (!inserted) throw Error(ErrorCode::kInvalidArgument, "duplicate asset in snapshot: " + id.hex());
  id_array_.push_back(id);
}

const Annotations* AssetIndex::find(const AssetId& id) const {
  auto it = detail_map_.find(id);
  return it == detail_map_.end() ? nullptr : &it->second;
}

DatasetSnapshot::DatasetSnapshot(SnapshotId id, std::vector<SnapshotId> parents,
                                 std::string provenance, std::vector<std::string> class_names,
                                 std::int64_t created_ms, std::vector<SnapshotEntry> entries)
    : id_(std::move(id)),
      parents_(std::move(parents)),
      provenance_(std::move(provenance)),
      class_names_(std::move(class_names)),
      created_ms_(created_ms) {
  for (auto& e : entries) index_.append(e.id, std::move(e.annotations));
}

std::vector<SnapshotEntry> DatasetSnapshot::entries() const {
  std::vector<SnapshotEntry> out;
  out.reserve(index_.size());
  for (const auto& id : index_.ids()) out.push_back({id, *index_.find(id)});
  return out;
}

std::size_t DatasetSnapshot::labeled_count() const {
  std::size_t n = 0;
  for (const auto& id : index_.ids()) n += index_.find(id)->empty() ? 0 : 1;
  return n;
}

std::string DatasetSnapshot::content_digest() const {
  codec::Writer w;
  w.u32(static_cast<std::uint32_t>(class_names_.size()));
  for (const auto& c : class_names_) w.str(c);
  w.u64(index_.size());
  for (const auto& id : index_.ids()) {
    w.str(id.hex());
    const auto& anns = *index_.find(id);
    w.u32(static_cast<std::uint32_t>(anns.size()));
    for (const auto& a : anns) {
      w.u32(a.class_id);
      w.f64(a.x_min);
      w.f64(a.y_min);
      w.f64(a.x_max);
      w.f64(a.y_max);
    }
  }
  return sha256_hex(w.data());
}

}  // namespace iterforge
