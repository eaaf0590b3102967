#pragma once

#include <memory>
#include <string>

#include "iterforge/service/api.hpp"

namespace iterforge {

// Serves the API over HTTP/1.1 and the progress push channel as a
// WebSocket at /ws/{user_id}. One thread per connection.
class HttpServer {
 public:
  // Binds immediately; port 0 picks a free port. Throws Error(kUnavailable)
  // when the address is in use.
  HttpServer(Platform& platform, const std::string& address, int port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  int port() const;
  // Stops accepting, closes push channels and joins connection threads.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iterforge
