#pragma once

#include <functional>
#include <memory>
#include <string>

#include "faultarm/teleop.hpp"

namespace faultarm {

/// WebSocket front end for a TeleopSession. The first connected client owns
/// the session; later clients are read-only spectators that receive frames.
/// When the owner leaves, an unsaved recording is discarded and the oldest
/// spectator is promoted.
class TeleopServer {
 public:
  /// Binds immediately; port 0 picks a free port (see port()).
  TeleopServer(TeleopSession& session, unsigned short port, const std::string& address = "127.0.0.1");
  ~TeleopServer();

  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  unsigned short port() const;

  /// Runs the accept loop and the fixed-rate tick on the calling thread until stop().
  void run();
  /// Safe to call from any thread.
  void stop();
  /// Makes run() return on SIGINT/SIGTERM.
  void stop_on_signals();

  void set_logger(std::function<void(const std::string&)> log);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace faultarm
