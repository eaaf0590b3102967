#include "iterforge/assets/importers.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_set>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

namespace iterforge {

namespace fs = std::filesystem;

ImportFormat parse_import_format(std::string_view text) {
  if (text == "voc-xml-subset" || text == "voc") return ImportFormat::kVocXmlSubset;
  if (text == "yolo-txt" || text == "yolo") return ImportFormat::kYoloTxt;
  if (text == "flat-unlabeled" || text == "flat") return ImportFormat::kFlatUnlabeled;
  throw Error(ErrorCode::kInvalidArgument, "unknown import format: " + std::string(text));
}

std::string_view to_string(ImportFormat format) {
  switch (format) {
    case ImportFormat::kVocXmlSubset: return "voc-xml-subset";
    case ImportFormat::kYoloTxt: return "yolo-txt";
    case ImportFormat::kFlatUnlabeled: return "flat-unlabeled";
  }
  return "flat-unlabeled";
}

UnknownLabelPolicy parse_unknown_label_policy(std::string_view text) {
  if (text == "ignore") return UnknownLabelPolicy::kIgnore;
  if (text == "abort") return UnknownLabelPolicy::kAbort;
  if (text == "add") return UnknownLabelPolicy::kAdd;
  throw Error(ErrorCode::kInvalidArgument, "unknown label policy: " + std::string(text));
}

std::string_view to_string(UnknownLabelPolicy policy) {
  switch (policy) {
    case UnknownLabelPolicy::kIgnore: return "ignore";
    case UnknownLabelPolicy::kAbort: return "abort";
    case UnknownLabelPolicy::kAdd: return "add";
  }
  return "ignore";
}

namespace {

double parse_number(std::string_view token) {
  double v = 0;
  auto first = token.data();
  auto last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw Error(ErrorCode::kInvalidArgument, "bad number '" + std::string(token) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Text between <tag> and </tag> starting at |from|; npos-safe.
std::optional<std::string_view> element(std::string_view xml, std::string_view tag,
                                        std::size_t from = 0, std::size_t* end_pos = nullptr) {
  std::string open = "<" + std::string(tag) + ">";
  std::string close = "</" + std::string(tag) + ">";
  auto b = xml.find(open, from);
  if (b == std::string_view::npos) return std::nullopt;
  auto e = xml.find(close, b + open.size());
  if (e == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "unterminated <" + std::string(tag) + ">");
  }
  if (end_pos) *end_pos = e + close.size();
  return xml.substr(b + open.size(), e - b - open.size());
}

std::string_view required(std::string_view xml, std::string_view tag) {
  auto v = element(xml, tag);
  if (!v) throw Error(ErrorCode::kInvalidArgument, "missing <" + std::string(tag) + ">");
  return trim(*v);
}

struct PendingAsset {
  AssetId id;
  std::string bytes;
  std::string source_name;
  Annotations annotations;
};

}  // namespace

std::vector<RawObject> parse_yolo_annotation(std::string_view text, double reference_width,
                                             double reference_height) {
  std::vector<RawObject> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string_view l = trim(line);
    if (l.empty()) continue;
    std::vector<std::string_view> tokens;
    while (!l.empty()) {
      auto sp = l.find_first_of(" \t");
      tokens.push_back(l.substr(0, sp));
      if (sp == std::string_view::npos) break;
      l = trim(l.substr(sp));
    }
    if (tokens.size() != 5) {
      throw Error(ErrorCode::kInvalidArgument, "yolo line needs 5 fields: '" + line + "'");
    }
    std::uint32_t cls = 0;
    auto [ptr, ec] = std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), cls);
    if (ec != std::errc() || ptr != tokens[0].data() + tokens[0].size()) {
      throw Error(ErrorCode::kInvalidArgument, "bad yolo class '" + std::string(tokens[0]) + "'");
    }
    double cx = parse_number(tokens[1]), cy = parse_number(tokens[2]);
    double w = parse_number(tokens[3]), h = parse_number(tokens[4]);
    if (w < 0 || h < 0) throw Error(ErrorCode::kInvalidArgument, "negative yolo box size");
    RawObject obj;
    obj.label = std::string(tokens[0]);
    obj.class_index = cls;
    obj.x_min = (cx - w / 2) * reference_width;
    obj.x_max = (cx + w / 2) * reference_width;
    obj.y_min = (cy - h / 2) * reference_height;
    obj.y_max = (cy + h / 2) * reference_height;
    out.push_back(std::move(obj));
  }
  return out;
}

std::vector<RawObject> parse_voc_objects(std::string_view xml) {
  std::vector<RawObject> out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t end = 0;
    auto obj = element(xml, "object", pos, &end);
    if (!obj) break;
    RawObject raw;
    raw.label = std::string(required(*obj, "name"));
    auto box = element(*obj, "bndbox");
    if (!box) throw Error(ErrorCode::kInvalidArgument, "object without <bndbox>");
    raw.x_min = parse_number(required(*box, "xmin"));
    raw.y_min = parse_number(required(*box, "ymin"));
    raw.x_max = parse_number(required(*box, "xmax"));
    raw.y_max = parse_number(required(*box, "ymax"));
    if (raw.x_min > raw.x_max || raw.y_min > raw.y_max) {
      throw Error(ErrorCode::kInvalidArgument, "inverted bndbox for '" + raw.label + "'");
    }
    out.push_back(std::move(raw));
    pos = end;
  }
  return out;
}

ImportReport import_dataset(AssetStore& store, const ImportOptions& options) {
  if (!fs::is_directory(options.source)) {
    throw Error(ErrorCode::kInvalidArgument, "import source is not a directory: " +
                                                 options.source.string());
  }
  std::string_view ann_ext;
  if (options.format == ImportFormat::kYoloTxt) ann_ext = ".txt";
  if (options.format == ImportFormat::kVocXmlSubset) ann_ext = ".xml";

  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(options.source)) {
    if (!de.is_regular_file()) continue;
    const auto& p = de.path();
    if (!ann_ext.empty() && p.extension() == ann_ext) continue;
    if (p.filename().string().starts_with(".")) continue;
    files.push_back(p);
  }
  std::sort(files.begin(), files.end());

  ImportReport report;
  report.class_names = options.class_names;
  std::map<std::string, std::uint32_t> class_lookup;
  for (std::uint32_t i = 0; i < report.class_names.size(); ++i) class_lookup[report.class_names[i]] = i;

  // Resolves a parsed object's class under the unknown-label policy.
  auto resolve = [&](const RawObject& raw, const fs::path& file) -> std::optional<std::uint32_t> {
    if (raw.class_index) {
      if (*raw.class_index < report.class_names.size()) return raw.class_index;
    } else if (auto it = class_lookup.find(raw.label); it != class_lookup.end()) {
      return it->second;
    }
    ++report.unknown_labels;
    switch (options.policy) {
      case UnknownLabelPolicy::kAbort:
        throw Error(ErrorCode::kAborted,
                    "unknown label '" + raw.label + "' in " + file.filename().string());
      case UnknownLabelPolicy::kIgnore:
        report.warnings.push_back("dropped unknown label '" + raw.label + "' in " +
                                  file.filename().string());
        return std::nullopt;
      case UnknownLabelPolicy::kAdd:
        if (raw.class_index) {
          while (report.class_names.size() <= *raw.class_index) {
            report.class_names.push_back("class_" + std::to_string(report.class_names.size()));
          }
          return raw.class_index;
        }
        report.class_names.push_back(raw.label);
        class_lookup[raw.label] = static_cast<std::uint32_t>(report.class_names.size() - 1);
        return class_lookup[raw.label];
    }
    return std::nullopt;
  };

  // Everything is read and validated before any blob is written, so an abort
  // leaves the store untouched.
  std::vector<PendingAsset> pending;
  std::unordered_set<AssetId> seen;
  for (const auto& file : files) {
    ++report.files;
    PendingAsset asset;
    asset.bytes = read_file(file);
    asset.id = AssetId::of_bytes(asset.bytes);
    asset.source_name = file.filename().string();
    if (!seen.insert(asset.id).second) {
      ++report.duplicate_files;
      continue;
    }
    if (!ann_ext.empty()) {
      fs::path ann_path = file;
      ann_path.replace_extension(ann_ext);
      if (fs::exists(ann_path)) {
        ++report.annotation_files;
        std::vector<RawObject> raws;
        try {
          std::string text = read_file(ann_path);
          raws = options.format == ImportFormat::kYoloTxt
                     ? parse_yolo_annotation(text, options.reference_width, options.reference_height)
                     : parse_voc_objects(text);
        } catch (const Error& e) {
          ++report.malformed_files;
          if (options.policy == UnknownLabelPolicy::kAbort) {
            throw Error(ErrorCode::kAborted, "malformed annotation " +
                                                 ann_path.filename().string() + ": " + e.what());
          }
          report.warnings.push_back("skipped malformed " + ann_path.filename().string() + ": " +
                                    e.what());
        }
        for (const auto& raw : raws) {
          if (auto cls = resolve(raw, ann_path)) {
            asset.annotations.push_back({*cls, raw.x_min, raw.y_min, raw.x_max, raw.y_max});
            ++report.objects;
          }
        }
      }
    }
    pending.push_back(std::move(asset));
  }

  std::size_t blobs_before = store.blob_count();
  std::vector<SnapshotEntry> entries;
  entries.reserve(pending.size());
  for (auto& a : pending) {
    store.put_asset(a.bytes, a.source_name);
    entries.push_back({a.id, std::move(a.annotations)});
  }
  report.assets = entries.size();
  report.new_blobs = store.blob_count() - blobs_before;
  report.snapshot = store.commit_snapshot({}, std::move(entries), options.provenance, report.class_names);
  return report;
}

}  // namespace iterforge
