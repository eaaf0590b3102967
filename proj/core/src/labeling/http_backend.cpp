#include "iterforge/labeling/http_backend.hpp"

#include <httplib.h>

#include "iterforge/common/error.hpp"

namespace iterforge {

namespace {

httplib::Client make_client(const std::string& base_url, int timeout_ms) {
  httplib::Client client(base_url);
  auto sec = timeout_ms / 1000;
  auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  return client;
}

nlohmann::json checked_body(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw Error(ErrorCode::kUnavailable,
                what + ": labeling service unreachable (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status == 404) throw Error(ErrorCode::kNotFound, what + ": not found");
  if (res->status == 409) throw Error(ErrorCode::kFailedPrecondition, what + ": " + res->body);
  if (res->status >= 500) throw Error(ErrorCode::kUnavailable, what + ": status " + std::to_string(res->status));
  if (res->status >= 300) {
    throw Error(ErrorCode::kInvalidArgument, what + ": status " + std::to_string(res->status) + " " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnavailable, what + ": bad response body: " + e.what());
  }
}

}  // namespace

HttpLabelBackend::HttpLabelBackend(std::string base_url, int timeout_ms)
    : base_url_(std::move(base_url)), timeout_ms_(timeout_ms) {}

std::string HttpLabelBackend::create(const LabelJob& job) {
  auto client = make_client(base_url_, timeout_ms_);
  auto body = checked_body(client.Post("/tasks", to_json(job).dump(), "application/json"), "create");
  return body.at("task_id").get<std::string>();
}

LabelStatus HttpLabelBackend::status(const std::string& backend_task_id) {
  auto client = make_client(base_url_, timeout_ms_);
  return label_status_from_json(checked_body(client.Get("/tasks/" + backend_task_id), "status"));
}

std::vector<LabelResult> HttpLabelBackend::results(const std::string& backend_task_id) {
  auto client = make_client(base_url_, timeout_ms_);
  return label_results_from_json(
      checked_body(client.Get("/tasks/" + backend_task_id + "/results"), "results"));
}

struct LabelBackendServer::Impl {
  httplib::Server server;
  std::thread thread;
};

LabelBackendServer::LabelBackendServer(std::shared_ptr<LabelBackend> backend, int port)
    : impl_(std::make_unique<Impl>()) {
  auto reply_error = [](httplib::Response& res, const Error& e) {
    switch (e.code()) {
      case ErrorCode::kNotFound: res.status = 404; break;
      case ErrorCode::kFailedPrecondition: res.status = 409; break;
      case ErrorCode::kInvalidArgument: res.status = 400; break;
      default: res.status = 503; break;
    }
    res.set_content(nlohmann::json{{"error", to_string(e.code())}, {"message", e.what()}}.dump(),
                     "application/json");
  };
  auto& s = impl_->server;
  s.Post("/tasks", [backend, reply_error](const httplib::Request& req, httplib::Response& res) {
    try {
      auto id = backend->create(label_job_from_json(nlohmann::json::parse(req.body)));
      res.set_content(nlohmann::json{{"task_id", id}}.dump(), "application/json");
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const std::exception& e) {
      reply_error(res, Error(ErrorCode::kInvalidArgument, e.what()));
    }
  });
  s.Get(R"(/tasks/([^/]+))", [backend, reply_error](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(to_json(backend->status(req.matches[1])).dump(), "application/json");
    } catch (const Error& e) {
      reply_error(res, e);
    }
  });
  s.Get(R"(/tasks/([^/]+)/results)",
        [backend, reply_error](const httplib::Request& req, httplib::Response& res) {
          try {
            res.set_content(to_json(backend->results(req.matches[1])).dump(), "application/json");
          } catch (const Error& e) {
            reply_error(res, e);
          }
        });
  if (port == 0) {
    port_ = s.bind_to_any_port("127.0.0.1");
  } else if (s.bind_to_port("127.0.0.1", port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw Error(ErrorCode::kUnavailable, "cannot bind label backend server");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

LabelBackendServer::~LabelBackendServer() { stop(); }

std::string LabelBackendServer::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void LabelBackendServer::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

}  // namespace iterforge
