#include "iterforge/labeling/backend.hpp"

#include <array>
#include <limits>

#include "iterforge/common/error.hpp"

namespace iterforge {

namespace {

constexpr std::array<std::string_view, 4> kStateNames = {"created", "in-progress", "completed",
                                                         "failed"};

nlohmann::json objects_to_json(const Annotations& objects) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& o : objects) {
    out.push_back({{"class_id", o.class_id}, {"box", {o.x_min, o.y_min, o.x_max, o.y_max}}});
  }
  return out;
}

Annotations objects_from_json(const nlohmann::json& j) {
  Annotations out;
  if (j.is_null()) return out;
  for (const auto& o : j) {
    const auto& box = o.at("box");
    if (!box.is_array() || box.size() != 4) {
      throw Error(ErrorCode::kInvalidArgument, "object box must have 4 numbers");
    }
    auto raw = o.at("class_id").get<std::int64_t>();
    auto cls = raw < 0 || raw > std::numeric_limits<std::uint32_t>::max()
                   ? std::numeric_limits<std::uint32_t>::max()
                   : static_cast<std::uint32_t>(raw);
    out.push_back({cls, box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                   box[3].get<double>()});
  }
  return out;
}

}  // namespace

std::string_view to_string(LabelState state) { return kStateNames[static_cast<std::size_t>(state)]; }

LabelState parse_label_state(std::string_view text) {
  for (std::size_t i = 0; i < kStateNames.size(); ++i) {
    if (kStateNames[i] == text) return static_cast<LabelState>(i);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown label state: " + std::string(text));
}

nlohmann::json to_json(const LabelJob& job) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : job.items) {
    items.push_back({{"asset_id", item.asset_id}, {"objects", objects_to_json(item.objects)}});
  }
  nlohmann::json j = {{"classes", job.classes}, {"instructions", job.instructions}, {"items", items}};
  if (job.doc_url) j["doc_url"] = *job.doc_url;
  return j;
}

LabelJob label_job_from_json(const nlohmann::json& j) {
  LabelJob job;
  job.classes = j.at("classes").get<std::vector<std::string>>();
  job.instructions = j.value("instructions", "");
  if (j.contains("doc_url") && j["doc_url"].is_string()) job.doc_url = j["doc_url"].get<std::string>();
  for (const auto& item : j.at("items")) {
    job.items.push_back({item.at("asset_id").get<std::string>(),
                         objects_from_json(item.value("objects", nlohmann::json::array()))});
  }
  return job;
}

nlohmann::json to_json(const LabelStatus& status) {
  return {{"progress", status.progress}, {"state", to_string(status.state)}};
}

LabelStatus label_status_from_json(const nlohmann::json& j) {
  return {j.at("progress").get<double>(), parse_label_state(j.at("state").get<std::string>())};
}

nlohmann::json to_json(const std::vector<LabelResult>& results) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : results) {
    out.push_back({{"asset_id", r.asset_id}, {"objects", objects_to_json(r.objects)}});
  }
  return out;
}

std::vector<LabelResult> label_results_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kInvalidArgument, "results must be a list");
  std::vector<LabelResult> out;
  for (const auto& r : j) {
    out.push_back({r.at("asset_id").get<std::string>(),
                   objects_from_json(r.value("objects", nlohmann::json::array()))});
  }
  return out;
}

}  // namespace iterforge
