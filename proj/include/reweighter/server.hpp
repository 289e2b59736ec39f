#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "reweighter/session.hpp"

namespace rw {

struct ServerOptions {
  std::string host = "127.0.0.1";
  /// 0 picks a free port.
  int port = 8080;
  /// Static files served under /ui/ when the directory exists.
  std::filesystem::path ui_dir;
  std::size_t max_payload = 10 * 1024 * 1024;
};

/// HTTP/JSON front end of one Session.
///
/// Reads are answered from an immutable snapshot of the session that is
/// swapped after every mutation; mutations run one at a time under a single
/// writer lock, so a reader never sees a half-applied change. Adjustments
/// are staged by default and applied together by POST /api/recompute.
class ApiServer {
 public:
  ApiServer(std::unique_ptr<Session> session, ServerOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the socket; throws rw::Error(io_error) when the port is taken.
  /// Returns the bound port.
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void listen();
  /// bind() + listen() on a background thread.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for a library error code.
int http_status_for(const std::string& code);

}  // namespace rw
