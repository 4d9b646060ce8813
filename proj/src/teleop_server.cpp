#include "faultarm/teleop_server.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <iomanip>
#include <list>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace faultarm {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxQueuedFrames = 256;

}  // namespace

struct TeleopServer::Impl {
  struct Connection : std::enable_shared_from_this<Connection> {
    Connection(Impl& server, tcp::socket socket) : server(server), ws(std::move(socket)) {}

    void start() {
      ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return self->server.remove(self);
        self->open = true;
        self->read();
      });
    }

    void read() {
      ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->server.remove(self);
        const std::string text = beast::buffers_to_string(self->buffer.data());
        self->buffer.consume(self->buffer.size());
        self->server.on_message(self, text);
        self->read();
      });
    }

    void send(std::string text) {
      if (!open || outbox.size() >= kMaxQueuedFrames) return;
      outbox.push_back(std::move(text));
      if (outbox.size() == 1) write();
    }

    void write() {
      ws.text(true);
      ws.async_write(asio::buffer(outbox.front()),
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return self->server.remove(self);
                       self->outbox.pop_front();
                       if (!self->outbox.empty()) self->write();
                     });
    }

    Impl& server;
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    std::deque<std::string> outbox;
    bool open = false;
    bool sent_geometry = false;
  };

  Impl(TeleopSession& s, unsigned short port, const std::string& address)
      : session(s),
        acceptor(ioc, tcp::endpoint(asio::ip::make_address(address), port)),
        timer(ioc),
        period(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / s.options().rate_hz))) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto c = std::make_shared<Connection>(*this, std::move(socket));
      connections.push_back(c);
      log("client connected (" + std::to_string(connections.size()) + " total)");
      c->start();
      accept();
    });
  }

  bool is_owner(const std::shared_ptr<Connection>& c) const {
    for (const auto& other : connections) {
      if (other->open) return other == c;
    }
    return false;
  }

  void on_message(const std::shared_ptr<Connection>& c, const std::string& text) {
    if (!is_owner(c)) {
      nlohmann::json err = {{"type", "Error"},
                            {"payload", {{"message", "spectators are read-only"}, {"received", text}}},
                            {"tick", session.tick_count()}};
      c->send(err.dump());
      return;
    }
    if (auto err = session.submit(text)) c->send(err->dump());
  }

  void remove(const std::shared_ptr<Connection>& c) {
    const bool was_owner = is_owner(c);
    const auto before = connections.size();
    connections.remove(c);
    if (connections.size() == before) return;
    c->open = false;
    beast::error_code ignored;
    beast::get_lowest_layer(c->ws).socket().close(ignored);
    log("client disconnected");
    if (was_owner) {
      if (session.drop_recording("owner disconnected")) log("unsaved recording discarded");
    }
  }

  void schedule() {
    next_tick += period;
    timer.expires_at(next_tick);
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      on_tick();
      schedule();
    });
  }

  // Logs the measured tick rate about every ten seconds; more than 20% off
  // the configured rate is flagged.
  void track_cadence() {
    const auto now = std::chrono::steady_clock::now();
    if (window_ticks++ == 0) {
      window_start = now;
      return;
    }
    const double target = session.options().rate_hz;
    if (static_cast<double>(window_ticks) < 10.0 * target) return;
    const double measured =
        static_cast<double>(window_ticks - 1) / std::chrono::duration<double>(now - window_start).count();
    std::ostringstream os;
    os << "tick rate " << std::fixed << std::setprecision(1) << measured << " Hz (target " << target << ")";
    if (std::abs(measured - target) > 0.2 * target) os << " outside 20%";
    log(os.str());
    window_ticks = 0;
  }

  void on_tick() {
    track_cadence();
    auto result = session.tick();
    std::shared_ptr<Connection> owner;
    for (const auto& c : connections) {
      if (c->open) {
        owner = c;
        break;
      }
    }
    if (owner) {
      for (const auto& n : result.notices) owner->send(n.dump());
    }
    const std::string plain = result.frame.dump();
    std::string with_geometry;
    for (const auto& c : connections) {
      if (!c->open) continue;
      if (!c->sent_geometry) {
        if (with_geometry.empty()) {
          nlohmann::json f = result.frame;
          f["payload"]["geometry"] = session.geometry();
          with_geometry = f.dump();
        }
        c->send(with_geometry);
        c->sent_geometry = true;
      } else {
        c->send(plain);
      }
    }
  }

  void log(const std::string& line) {
    if (logger) logger(line);
  }

  TeleopSession& session;
  asio::io_context ioc{1};
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::chrono::steady_clock::duration period;
  std::chrono::steady_clock::time_point next_tick;
  std::chrono::steady_clock::time_point window_start;
  std::size_t window_ticks = 0;
  std::list<std::shared_ptr<Connection>> connections;
  std::unique_ptr<asio::signal_set> signals;
  std::function<void(const std::string&)> logger;
};

TeleopServer::TeleopServer(TeleopSession& session, unsigned short port, const std::string& address)
    : impl_(std::make_unique<Impl>(session, port, address)) {}

TeleopServer::~TeleopServer() = default;

unsigned short TeleopServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TeleopServer::run() {
  impl_->accept();
  impl_->next_tick = std::chrono::steady_clock::now();
  impl_->schedule();
  impl_->ioc.run();
}

void TeleopServer::stop() { impl_->ioc.stop(); }

void TeleopServer::stop_on_signals() {
  impl_->signals = std::make_unique<asio::signal_set>(impl_->ioc, SIGINT, SIGTERM);
  impl_->signals->async_wait([this](beast::error_code ec, int) {
    if (!ec) stop();
  });
}

void TeleopServer::set_logger(std::function<void(const std::string&)> log) {
  impl_->logger = std::move(log);
}

}  // namespace faultarm
