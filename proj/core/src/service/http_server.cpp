#include "iterforge/service/http_server.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <atomic>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "iterforge/common/error.hpp"

namespace iterforge {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

bool readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0 && (p.revents & (POLLIN | POLLHUP | POLLERR));
}

}  // namespace

struct HttpServer::Impl {
  struct Connection {
    tcp::socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
    explicit Connection(tcp::socket s) : socket(std::move(s)) {}
  };

  Platform& platform;
  ApiHandler api;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::atomic<bool> stopping{false};
  int bound_port = 0;
  std::mutex mu;
  std::list<std::shared_ptr<Connection>> connections;
  std::thread accept_thread;

  explicit Impl(Platform& p) : platform(p), api(p) {}

  void accept_loop() {
    while (!stopping) {
      if (!readable(acceptor.native_handle(), 100)) {
        reap();
        continue;
      }
      beast::error_code ec;
      tcp::socket socket(ioc);
      acceptor.accept(socket, ec);
      if (ec) continue;
      auto conn = std::make_shared<Connection>(std::move(socket));
      std::lock_guard lock(mu);
      if (stopping) break;
      conn->thread = std::thread([this, conn] {
        try {
          serve(*conn);
        } catch (const std::exception&) {
        }
        conn->done = true;
      });
      connections.push_back(conn);
    }
  }

  void reap() {
    std::lock_guard lock(mu);
    for (auto it = connections.begin(); it != connections.end();) {
      if ((*it)->done) {
        if ((*it)->thread.joinable()) (*it)->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }

  void serve(Connection& conn) {
    beast::flat_buffer buffer;
    for (;;) {
      http::request<http::string_body> req;
      beast::error_code ec;
      http::read(conn.socket, buffer, req, ec);
      if (ec) return;
      if (websocket::is_upgrade(req)) {
        serve_push(conn, std::move(req));
        return;
      }
      ApiRequest ar;
      ar.method = std::string(req.method_string());
      split_target(std::string_view(req.target().data(), req.target().size()), ar.path, ar.query);
      ar.body = std::move(req.body());
      ApiResponse out = api.handle(ar);
      http::response<http::string_body> res{static_cast<http::status>(out.status), req.version()};
      res.set(http::field::server, "iterforge");
      res.set(http::field::content_type, "application/json");
      res.keep_alive(req.keep_alive());
      res.body() = out.body.dump();
      res.prepare_payload();
      http::write(conn.socket, res, ec);
      if (ec || !res.keep_alive()) {
        conn.socket.shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
    }
  }

  void serve_push(Connection& conn, http::request<http::string_body> req) {
    std::string path;
    std::map<std::string, std::string> query;
    split_target(std::string_view(req.target().data(), req.target().size()), path, query);
    const std::string prefix = "/ws/";
    beast::error_code ec;
    if (path.rfind(prefix, 0) != 0 || path.size() == prefix.size() ||
        path.find('/', prefix.size()) != std::string::npos) {
      http::response<http::string_body> res{http::status::not_found, req.version()};
      res.set(http::field::content_type, "application/json");
      res.body() = R"({"error":{"code":"not_found","message":"push channel is /ws/{user_id}"}})";
      res.prepare_payload();
      http::write(conn.socket, res, ec);
      return;
    }
    std::string user = path.substr(prefix.size());
    websocket::stream<tcp::socket&> ws(conn.socket);
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    auto sub = platform.hub().subscribe(user);
    beast::flat_buffer incoming;
    while (!stopping && !sub->closed()) {
      if (readable(conn.socket.native_handle(), 0)) {
        ws.read(incoming, ec);
        if (ec) break;
        incoming.consume(incoming.size());
      }
      auto frame = sub->next(std::chrono::milliseconds(100));
      if (!frame) continue;
      ws.write(asio::buffer(*frame), ec);
      if (ec) break;
    }
    platform.hub().unsubscribe(sub);
    if (ws.is_open()) ws.close(websocket::close_code::going_away, ec);
  }
};

HttpServer::HttpServer(Platform& platform, const std::string& address, int port)
    : impl_(std::make_unique<Impl>(platform)) {
  beast::error_code ec;
  tcp::endpoint ep(asio::ip::make_address(address, ec), static_cast<unsigned short>(port));
  if (ec) throw Error(ErrorCode::kInvalidArgument, "bad bind address " + address);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::kUnavailable,
                "cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
  }
  impl_->bound_port = impl_->acceptor.local_endpoint().port();
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::port() const { return impl_->bound_port; }

void HttpServer::stop() {
  if (impl_->stopping.exchange(true)) return;
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::list<std::shared_ptr<Impl::Connection>> conns;
  {
    std::lock_guard lock(impl_->mu);
    conns.swap(impl_->connections);
  }
  for (auto& c : conns) ::shutdown(c->socket.native_handle(), SHUT_RDWR);
  for (auto& c : conns) {
    if (c->thread.joinable()) c->thread.join();
  }
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

}  // namespace iterforge
