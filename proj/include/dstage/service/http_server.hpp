#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "dstage/service/run_service.hpp"

namespace dstage::service {

/// JSON over HTTP in front of a RunService. Errors are returned as
/// {"error": {"code", "message", "violations"}}.
class HttpServer {
 public:
  explicit HttpServer(RunService& service);
  ~HttpServer();

  /// Binds to `port`, or to any free port when it is 0. Returns the bound
  /// port, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires a successful bind.
  bool serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Error body and HTTP status for an exception thrown while handling a
/// request.
std::pair<int, Json> error_response(const std::exception& e);

}  // namespace dstage::service
