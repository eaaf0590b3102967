#include "iterforge/assets/dataset_ops.hpp"

#include <algorithm>
#include <map>

#include "iterforge/common/error.hpp"

namespace iterforge {

MergeStrategy parse_merge_strategy(std::string_view text) {
  if (text == "prefer-left") return MergeStrategy::kPreferLeft;
  if (text == "prefer-right") return MergeStrategy::kPreferRight;
  if (text == "union-annotations") return MergeStrategy::kUnionAnnotations;
  throw Error(ErrorCode::kInvalidArgument, "unknown merge strategy: " + std::string(text));
}

std::string_view to_string(MergeStrategy strategy) {
  switch (strategy) {
    case MergeStrategy::kPreferLeft: return "prefer-left";
    case MergeStrategy::kPreferRight: return "prefer-right";
    case MergeStrategy::kUnionAnnotations: return "union-annotations";
  }
  return "prefer-left";
}

namespace {

std::set<std::uint32_t> class_ids(const DatasetSnapshot& s, const std::set<std::string>& names) {
  std::set<std::uint32_t> out;
  for (const auto& n : names) {
    auto it = std::find(s.class_names().begin(), s.class_names().end(), n);
    if (it == s.class_names().end()) {
      throw Error(ErrorCode::kInvalidArgument, "class '" + n + "' not in snapshot " + s.id().value);
    }
    out.insert(static_cast<std::uint32_t>(it - s.class_names().begin()));
  }
  return out;
}

bool is_prefix(const std::vector<std::string>& shorter, const std::vector<std::string>& longer) {
  return shorter.size() <= longer.size() &&
         std::equal(shorter.begin(), shorter.end(), longer.begin());
}

}  // namespace

SnapshotId filter(AssetStore& store, const SnapshotId& source, const FilterSpec& spec,
                  std::string provenance) {
  auto snap = store.snapshot(source);
  bool has_include = spec.include_classes && !spec.include_classes->empty();
  bool has_exclude = spec.exclude_classes && !spec.exclude_classes->empty();
  if (!has_include && !has_exclude && !spec.labeled_only) {
    throw Error(ErrorCode::kInvalidArgument, "identity filter refused");
  }
  std::set<std::uint32_t> include, exclude;
  if (has_include) include = class_ids(*snap, *spec.include_classes);
  if (has_exclude) exclude = class_ids(*snap, *spec.exclude_classes);

  std::vector<SnapshotEntry> out;
  for (const auto& id : snap->index().ids()) {
    const Annotations& anns = *snap->annotations(id);
    if (has_include && std::none_of(anns.begin(), anns.end(), [&](const auto& a) {
          return include.contains(a.class_id);
        })) {
      continue;
    }
    Annotations kept;
    for (const auto& a : anns) {
      if (!exclude.contains(a.class_id)) kept.push_back(a);
    }
    if (has_exclude && !anns.empty() && kept.empty()) continue;
    if (spec.labeled_only && kept.empty()) continue;
    out.push_back({id, std::move(kept)});
  }
  return store.commit_snapshot({source}, std::move(out), std::move(provenance), snap->class_names());
}

SnapshotId merge(AssetStore& store, const SnapshotId& a, const SnapshotId& b,
                 MergeStrategy strategy, bool remap_classes, std::string provenance) {
  auto left = store.snapshot(a);
  auto right = store.snapshot(b);

  std::vector<std::string> classes;
  std::vector<std::uint32_t> right_map(right->class_names().size());
  for (std::uint32_t i = 0; i < right_map.size(); ++i) right_map[i] = i;
  if (is_prefix(left->class_names(), right->class_names())) {
    classes = right->class_names();
  } else if (is_prefix(right->class_names(), left->class_names())) {
    classes = left->class_names();
  } else if (remap_classes) {
    classes = left->class_names();
    for (std::uint32_t i = 0; i < right_map.size(); ++i) {
      const auto& name = right->class_names()[i];
      auto it = std::find(classes.begin(), classes.end(), name);
      if (it == classes.end()) {
        classes.push_back(name);
        right_map[i] = static_cast<std::uint32_t>(classes.size() - 1);
      } else {
        right_map[i] = static_cast<std::uint32_t>(it - classes.begin());
      }
    }
  } else {
    throw Error(ErrorCode::kFailedPrecondition,
                "class lists of " + a.value + " and " + b.value + " conflict");
  }

  auto remapped = [&](const Annotations& anns) {
    Annotations out = anns;
    for (auto& x : out) x.class_id = right_map[x.class_id];
    return out;
  };

  std::vector<SnapshotEntry> out;
  out.reserve(left->size() + right->size());
  for (const auto& id : left->index().ids()) {
    const Annotations& mine = *left->annotations(id);
    const Annotations* theirs = right->annotations(id);
    if (theirs == nullptr) {
      out.push_back({id, mine});
      continue;
    }
    switch (strategy) {
      case MergeStrategy::kPreferLeft:
        out.push_back({id, mine});
        break;
      case MergeStrategy::kPreferRight:
        out.push_back({id, remapped(*theirs)});
        break;
      case MergeStrategy::kUnionAnnotations: {
        Annotations combined = mine;
        for (const auto& x : remapped(*theirs)) {
          if (std::find(combined.begin(), combined.end(), x) == combined.end()) combined.push_back(x);
        }
        out.push_back({id, std::move(combined)});
        break;
      }
    }
  }
  for (const auto& id : right->index().ids()) {
    if (!left->contains(id)) out.push_back({id, remapped(*right->annotations(id))});
  }
  return store.commit_snapshot({a, b}, std::move(out), std::move(provenance), std::move(classes));
}

SnapshotId intersect(AssetStore& store, const SnapshotId& a, const SnapshotId& b,
                     std::string provenance) {
  auto left = store.snapshot(a);
  auto right = store.snapshot(b);
  std::vector<SnapshotEntry> out;
  for (const auto& id : left->index().ids()) {
    if (right->contains(id)) out.push_back({id, *left->annotations(id)});
  }
  return store.commit_snapshot({a, b}, std::move(out), std::move(provenance), left->class_names());
}

SnapshotId exclude(AssetStore& store, const SnapshotId& a, const SnapshotId& b,
                   std::string provenance) {
  auto left = store.snapshot(a);
  auto right = store.snapshot(b);
  std::vector<SnapshotEntry> out;
  for (const auto& id : left->index().ids()) {
    if (!right->contains(id)) out.push_back({id, *left->annotations(id)});
  }
  return store.commit_snapshot({a, b}, std::move(out), std::move(provenance), left->class_names());
}

SnapshotId select(AssetStore& store, const SnapshotId& source, const std::vector<AssetId>& ids,
                  std::string provenance) {
  auto snap = store.snapshot(source);
  std::vector<SnapshotEntry> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const Annotations* anns = snap->annotations(id);
    if (anns == nullptr) {
      throw Error(ErrorCode::kNotFound, "asset " + id.hex() + " not in " + source.value);
    }
    out.push_back({id, *anns});
  }
  return store.commit_snapshot({source}, std::move(out), std::move(provenance), snap->class_names());
}

SnapshotId run_dataset_op(AssetStore& store, const nlohmann::json& request, std::string provenance) {
  if (!request.is_object() || !request.contains("op")) {
    throw Error(ErrorCode::kInvalidArgument, "dataset op request needs an \"op\" field");
  }
  const std::string op = request.at("op").get<std::string>();
  auto sid = [&](const char* key) {
    if (!request.contains(key) || !request[key].is_string()) {
      throw Error(ErrorCode::kInvalidArgument, std::string("missing \"") + key + "\"");
    }
    return SnapshotId{request[key].get<std::string>()};
  };
  if (op == "filter") {
    FilterSpec spec;
    if (request.contains("include")) spec.include_classes = request["include"].get<std::set<std::string>>();
    if (request.contains("exclude")) spec.exclude_classes = request["exclude"].get<std::set<std::string>>();
    spec.labeled_only = request.value("labeled_only", false);
    return filter(store, sid("snapshot"), spec, std::move(provenance));
  }
  if (op == "merge") {
    return merge(store, sid("a"), sid("b"),
                 parse_merge_strategy(request.value("strategy", std::string("prefer-left"))),
                 request.value("remap", false), std::move(provenance));
  }
  if (op == "intersect") return intersect(store, sid("a"), sid("b"), std::move(provenance));
  if (op == "exclude") return exclude(store, sid("a"), sid("b"), std::move(provenance));
  throw Error(ErrorCode::kInvalidArgument, "unknown dataset op: " + op);
}

}  // namespace iterforge
