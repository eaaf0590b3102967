#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iterforge/assets/asset_store.hpp"

namespace iterforge {

enum class ImportFormat { kVocXmlSubset, kYoloTxt, kFlatUnlabeled };
enum class UnknownLabelPolicy { kIgnore, kAbort, kAdd };

// "voc-xml-subset" / "yolo-txt" / "flat-unlabeled"; throws kInvalidArgument.
ImportFormat parse_import_format(std::string_view text);
std::string_view to_string(ImportFormat format);
// "ignore" / "abort" / "add"
UnknownLabelPolicy parse_unknown_label_policy(std::string_view text);
std::string_view to_string(UnknownLabelPolicy policy);

struct ImportOptions {
  std::filesystem::path source;
  ImportFormat format = ImportFormat::kFlatUnlabeled;
  UnknownLabelPolicy policy = UnknownLabelPolicy::kIgnore;
  std::vector<std::string> class_names;
  std::string provenance = "import";
  // YOLO coordinates are normalized; they are scaled by this reference
  // size. Images are never decoded, so the default keeps unit coordinates.
  double reference_width = 1.0;
  double reference_height = 1.0;
};

struct ImportReport {
  SnapshotId snapshot;
  std::size_t files = 0;
  std::size_t assets = 0;
  std::size_t duplicate_files = 0;
  std::size_t new_blobs = 0;
  std::size_t annotation_files = 0;
  std::size_t malformed_files = 0;
  std::size_t objects = 0;
  std::size_t unknown_labels = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
};

// Reads every asset in |options.source|, deduplicates by content and commits
// a single root snapshot. Nothing is stored when the import aborts.
ImportReport import_dataset(AssetStore& store, const ImportOptions& options);

// Parsed object before class resolution.
struct RawObject {
  std::string label;            // VOC name, or the YOLO class index as text
  std::optional<std::uint32_t> class_index;  // YOLO only
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

// Each line "class x_center y_center width height" (normalized). Throws
// Error(kInvalidArgument) on a malformed line.
std::vector<RawObject> parse_yolo_annotation(std::string_view text, double reference_width,
                                             double reference_height);

// Extracts <object><name/><bndbox><xmin/>...</bndbox></object> elements and
// ignores everything else. Throws Error(kInvalidArgument) when malformed.
std::vector<RawObject> parse_voc_objects(std::string_view xml);

}  // namespace iterforge
