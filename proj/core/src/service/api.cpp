#include "iterforge/service/api.hpp"

#include <charconv>

#include "iterforge/common/error.hpp"
#include "iterforge/labeling/gateway.hpp"

namespace iterforge {

int http_status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kAlreadyExists:
    case ErrorCode::kFailedPrecondition:
    case ErrorCode::kAborted:
      return 409;
    case ErrorCode::kIntegrity:
      return 422;
    case ErrorCode::kResourceExhausted:
      return 429;
    case ErrorCode::kUnavailable:
      return 503;
    default:
      return 500;
  }
}

namespace {

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      int v = 0;
      auto r = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (r.ec == std::errc() && r.ptr == s.data() + i + 3) {
        out += static_cast<char>(v);
        i += 2;
      } else {
        out += s[i];
      }
    } else {
      out += s[i];
    }
  }
  return out;
}

std::vector<std::string> segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < path.size()) {
    std::size_t next = path.find('/', pos);
    if (next == std::string_view::npos) next = path.size();
    if (next > pos) out.push_back(url_decode(path.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

nlohmann::json parse_body(const ApiRequest& r) {
  if (r.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(r.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidArgument, "request body is not valid JSON");
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  return j;
}

std::size_t query_size(const ApiRequest& r, const std::string& key, std::size_t fallback) {
  auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return fallback;
  std::size_t v = 0;
  auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (res.ec != std::errc() || res.ptr != it->second.data() + it->second.size()) {
    throw Error(ErrorCode::kInvalidArgument, key + " must be a non-negative integer");
  }
  return v;
}

nlohmann::json project_json(const IterationState& s, const StageAction& next) {
  nlohmann::json j = s.to_json();
  j["next_action"] = next.to_json();
  return j;
}

ApiResponse accepted(const std::string& task_id, nlohmann::json extra = nlohmann::json::object()) {
  extra["task_id"] = task_id;
  return {202, extra};
}

}  // namespace

void split_target(std::string_view target, std::string& path,
                  std::map<std::string, std::string>& query) {
  std::size_t q = target.find('?');
  path = std::string(target.substr(0, q));
  query.clear();
  if (q == std::string_view::npos) return;
  std::string_view rest = target.substr(q + 1);
  while (!rest.empty()) {
    std::size_t amp = rest.find('&');
    std::string_view pair = rest.substr(0, amp);
    std::size_t eq = pair.find('=');
    if (!pair.empty()) {
      query[url_decode(pair.substr(0, eq))] =
          eq == std::string_view::npos ? std::string() : url_decode(pair.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
}

nlohmann::json snapshot_summary(const DatasetSnapshot& s) {
  nlohmann::json parents = nlohmann::json::array();
  for (const auto& p : s.parents()) parents.push_back(p.value);
  return {{"snapshot_id", s.id().value},
          {"parents", parents},
          {"provenance", s.provenance()},
          {"class_names", s.class_names()},
          {"created_ms", s.created_ms()},
          {"size", s.size()},
          {"labeled", s.labeled_count()},
          {"digest", s.content_digest()}};
}

nlohmann::json asset_detail_json(const AssetDetail& d, const std::vector<std::string>& classes) {
  nlohmann::json anns = nlohmann::json::array();
  for (const auto& o : d.annotations) {
    nlohmann::json a = {{"class_id", o.class_id}, {"box", {o.x_min, o.y_min, o.x_max, o.y_max}}};
    if (o.class_id < classes.size()) a["class_name"] = classes[o.class_id];
    anns.push_back(std::move(a));
  }
  return {{"asset_id", d.record.id.hex()},
          {"byte_size", d.record.byte_size},
          {"source_name", d.record.source_name},
          {"import_time_ms", d.record.import_time_ms},
          {"annotations", anns}};
}

ApiResponse ApiHandler::handle(const ApiRequest& request) {
  try {
    return route(request);
  } catch (const Error& e) {
    return error_response(http_status_of(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, to_string(ErrorCode::kInvalidArgument), e.what());
  } catch (const std::exception& e) {
    return error_response(500, to_string(ErrorCode::kInternal), e.what());
  }
}

ApiResponse ApiHandler::route(const ApiRequest& r) {
  auto seg = segments(r.path);
  const bool get = r.method == "GET";
  const bool post = r.method == "POST";
  auto method_not_allowed = [&] {
    return error_response(405, "method_not_allowed", r.method + " not allowed on " + r.path);
  };
  if (seg.size() < 2 || seg[0] != "api") {
    return error_response(404, to_string(ErrorCode::kNotFound), "no route " + r.path);
  }
  const std::string& res = seg[1];
  const std::size_t n = seg.size();

  if (res == "health" && n == 2) {
    return {200, {{"status", "ok"}, {"gpu_pool", {{"capacity", p_.scheduler().capacity()},
                                                  {"free", p_.scheduler().pool().free()}}}}};
  }

  if (res == "projects") {
    IterationEngine& engine = p_.engine();
    if (n == 2) {
      if (get) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& s : engine.list()) list.push_back(project_json(s, engine.next_action(s.project_id)));
        return {200, list};
      }
      if (post) {
        std::string id = engine.create_project(ProjectConfig::from_json(parse_body(r)));
        nlohmann::json body = project_json(engine.get(id), engine.next_action(id));
        return {201, body};
      }
      return method_not_allowed();
    }
    const std::string& id = seg[2];
    if (n == 3) {
      if (!get) return method_not_allowed();
      return {200, project_json(engine.get(id), engine.next_action(id))};
    }
    if (n == 4) {
      const std::string& verb = seg[3];
      if (verb == "next" && get) return {200, engine.next_action(id).to_json()};
      if (verb == "audit" && get) return {200, engine.audit(id)};
      if (verb == "advance" && post) {
        auto s = engine.advance(id);
        return {200, project_json(s, engine.next_action(id))};
      }
      if (verb == "interrupt" && post) {
        auto s = engine.interrupt(id);
        return {200, project_json(s, engine.next_action(id))};
      }
      if (verb == "auto" && post) {
        auto body = parse_body(r);
        engine.set_auto_advance(id, body.at("enabled").get<bool>());
        return {200, project_json(engine.get(id), engine.next_action(id))};
      }
      if (verb == "next" || verb == "audit" || verb == "advance" || verb == "interrupt" ||
          verb == "auto") {
        return method_not_allowed();
      }
    }
  }

  if (res == "datasets") {
    AssetStore& assets = p_.assets();
    if (n == 2) {
      if (!get) return method_not_allowed();
      nlohmann::json list = nlohmann::json::array();
      for (const auto& id : assets.list_snapshots()) list.push_back(snapshot_summary(*assets.snapshot(id)));
      return {200, list};
    }
    if (n == 3 && seg[2] == "import") {
      if (!post) return method_not_allowed();
      auto body = parse_body(r);
      TaskSpec spec;
      spec.kind = TaskKind::kImport;
      spec.user_id = body.value("user_id", "u1");
      spec.inputs = {{"dir", body.at("dir").get<std::string>()},
                     {"format", body.value("format", "flat-unlabeled")},
                     {"policy", body.value("policy", "ignore")},
                     {"class_names", body.value("class_names", std::vector<std::string>{})}};
      return accepted(p_.scheduler().submit(std::move(spec)));
    }
    if (n == 3 && seg[2] == "ops") {
      if (!post) return method_not_allowed();
      auto body = parse_body(r);
      TaskSpec spec;
      spec.kind = TaskKind::kDatasetOp;
      spec.user_id = body.value("user_id", "u1");
      body.erase("user_id");
      spec.inputs = body;
      return accepted(p_.scheduler().submit(std::move(spec)));
    }
    if (n == 3) {
      if (!get) return method_not_allowed();
      return {200, snapshot_summary(*assets.snapshot(SnapshotId{seg[2]}))};
    }
    if (n >= 4 && seg[3] == "assets") {
      if (!get) return method_not_allowed();
      SnapshotId sid{seg[2]};
      auto snap = assets.snapshot(sid);
      if (n == 5) {
        return {200, asset_detail_json(assets.get_asset_detail(sid, AssetId::from_hex(seg[4])),
                                       snap->class_names())};
      }
      if (n == 4) {
        std::size_t offset = query_size(r, "offset", 0);
        std::size_t limit = query_size(r, "limit", 50);
        if (limit > 1000) throw Error(ErrorCode::kInvalidArgument, "limit must be <= 1000");
        nlohmann::json items = nlohmann::json::array();
        for (const auto& d : assets.list_page(sid, offset, limit)) {
          items.push_back(asset_detail_json(d, snap->class_names()));
        }
        return {200, {{"snapshot_id", sid.value},
                      {"offset", offset},
                      {"limit", limit},
                      {"total", snap->size()},
                      {"items", items}}};
      }
    }
  }

  if (res == "tasks") {
    Scheduler& sched = p_.scheduler();
    if (n == 2) {
      if (get) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& t : sched.list()) list.push_back(t.to_json());
        return {200, list};
      }
      if (post) {
        auto body = parse_body(r);
        TaskSpec spec;
        spec.kind = parse_task_kind(body.at("kind").get<std::string>());
        spec.user_id = body.value("user_id", "u1");
        spec.gpu_count = body.value("gpu_count", -1);
        spec.inputs = body.value("inputs", nlohmann::json::object());
        if (spec.kind == TaskKind::kLabel && !spec.inputs.contains("label_task_id")) {
          spec.inputs["label_task_id"] = p_.labels().reserve_id();
        }
        return accepted(sched.submit(std::move(spec)));
      }
      return method_not_allowed();
    }
    const std::string& id = seg[2];
    if (n == 3) {
      if (!get) return method_not_allowed();
      auto t = sched.get(id);
      if (!t) throw Error(ErrorCode::kNotFound, "no task " + id);
      return {200, t->to_json()};
    }
    if (n == 4 && seg[3] == "status") {
      if (!get) return method_not_allowed();
      return {200, p_.task_status(id).to_json()};
    }
    if (n == 4 && seg[3] == "stop") {
      if (!post) return method_not_allowed();
      sched.stop_task(id);
      auto t = sched.get(id);
      return accepted(id, {{"state", to_string(t->state)}});
    }
  }

  if (res == "executors" && n == 2) {
    if (get) {
      nlohmann::json list = nlohmann::json::array();
      for (const auto& m : p_.executors().list()) list.push_back(m.to_json());
      return {200, list};
    }
    if (post) {
      auto body = parse_body(r);
      auto m = p_.executors().register_executor(body.at("path").get<std::string>());
      return {201, m.to_json()};
    }
    return method_not_allowed();
  }

  if (res == "labels") {
    if (n == 2) {
      if (get) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& l : p_.labels().list()) list.push_back(l.to_json());
        return {200, list};
      }
      if (post) {
        auto body = parse_body(r);
        TaskSpec spec;
        spec.kind = TaskKind::kLabel;
        spec.user_id = body.value("user_id", "u1");
        body.erase("user_id");
        std::string label_id = p_.labels().reserve_id();
        body["label_task_id"] = label_id;
        spec.inputs = body;
        return accepted(p_.scheduler().submit(std::move(spec)), {{"label_task_id", label_id}});
      }
      return method_not_allowed();
    }
    if (n == 3) {
      if (!get) return method_not_allowed();
      return {200, p_.labels().get(seg[2]).to_json()};
    }
  }

  if (res == "models") {
    if (n == 2) {
      if (!get) return method_not_allowed();
      nlohmann::json list = nlohmann::json::array();
      for (const auto& m : p_.models().list()) list.push_back(m.to_json());
      return {200, list};
    }
    if (n == 3) {
      if (!get) return method_not_allowed();
      return {200, p_.models().get(ModelId{seg[2]}).to_json()};
    }
  }

  return error_response(404, to_string(ErrorCode::kNotFound), "no route " + r.path);
}

}  // namespace iterforge
