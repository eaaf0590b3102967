#include "iterforge/labeling/sim_labeler.hpp"

#include <algorithm>

#include "iterforge/common/error.hpp"
#include "iterforge/toy/payload.hpp"
#include "iterforge/toy/synth.hpp"

namespace iterforge {

GroundTruthFn linear_ground_truth(std::vector<double> weights, double bias) {
  return [weights = std::move(weights), bias](std::string_view bytes) -> Annotations {
    auto x = toy::parse_payload(bytes, weights.size());
    if (!x) return {};
    auto cls = static_cast<std::uint32_t>(toy::linear_label(*x, weights, bias));
    return {{cls, 0, 0, 1, 1}};
  };
}

SimLabeler::SimLabeler(AssetFetcher fetch, GroundTruthFn truth, std::size_t rate)
    : fetch_(std::move(fetch)), truth_(std::move(truth)), rate_(std::max<std::size_t>(1, rate)) {}

void SimLabeler::check_available() const {
  if (!available_) throw Error(ErrorCode::kUnavailable, "labeling service unavailable");
}

std::string SimLabeler::create(const LabelJob& job) {
  check_available();
  if (job.items.empty()) throw Error(ErrorCode::kInvalidArgument, "label job has no items");
  std::lock_guard lock(mu_);
  std::string id = ids_.next();
  jobs_[id] = Job{job, 0};
  return id;
}

LabelStatus SimLabeler::status(const std::string& backend_task_id) {
  check_available();
  std::lock_guard lock(mu_);
  auto it = jobs_.find(backend_task_id);
  if (it == jobs_.end()) throw Error(ErrorCode::kNotFound, "no label job " + backend_task_id);
  Job& j = it->second;
  std::size_t n = j.job.items.size();
  j.labeled = std::min(n, j.labeled + rate_);
  LabelStatus s;
  s.progress = static_cast<double>(j.labeled) / static_cast<double>(n);
  s.state = j.labeled == n ? LabelState::kCompleted : LabelState::kInProgress;
  return s;
}

std::vector<LabelResult> SimLabeler::results(const std::string& backend_task_id) {
  check_available();
  LabelJob job;
  {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(backend_task_id);
    if (it == jobs_.end()) throw Error(ErrorCode::kNotFound, "no label job " + backend_task_id);
    if (it->second.labeled < it->second.job.items.size()) {
      throw Error(ErrorCode::kFailedPrecondition, "label job " + backend_task_id + " not completed");
    }
    job = it->second.job;
  }
  std::vector<LabelResult> out;
  out.reserve(job.items.size());
  for (const auto& item : job.items) {
    out.push_back({item.asset_id, truth_(fetch_(item.asset_id))});
  }
  return out;
}

std::size_t SimLabeler::job_count() const {
  std::lock_guard lock(mu_);
  return jobs_.size();
}

std::optional<LabelJob> SimLabeler::job(const std::string& backend_task_id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(backend_task_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second.job;
}

}  // namespace iterforge
