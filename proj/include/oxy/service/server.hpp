#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "oxy/service/api.hpp"

namespace httplib {
class Server;
}

namespace oxy {

struct ServerOptions {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
};

/// Single-port HTTP + SSE facade over an Api.
class Server {
 public:
  Server(Api& api, ServerOptions options);
  ~Server();

  /// Binds and returns the bound port. Throws IoError.
  int bind();
  /// Serves until stop(); call bind() first.
  void listen();
  void stop();

 private:
  void routes();

  Api& api_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace oxy
