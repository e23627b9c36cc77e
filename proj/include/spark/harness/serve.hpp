#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "spark/harness/session.hpp"

namespace spark::harness {

namespace serve_detail {
namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
}  // namespace serve_detail

/// WebSocket front end for a live session.
///
/// `/control` admits one operator at a time; `/view` admits any number of
/// read-only viewers. Everything runs on one io_context thread, so client
/// commands and the tick loop never race. State frames go out at 30 Hz.
class SessionServer {
  using tcp = serve_detail::tcp;

 public:
  enum class Role { Control, View };

  SessionServer(RunOptions opts, const std::string& host, unsigned short port)
      : opts_(disable_auto_reset(std::move(opts))),
        session_(opts_, &live_),
        acceptor_(ioc_),
        timer_(ioc_) {
    namespace net = serve_detail::net;
    boost::system::error_code ec;
    const auto addr = net::ip::make_address(host, ec);
    if (ec) throw std::runtime_error("serve: bad address '" + host + "'");
    const tcp::endpoint ep(addr, port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw std::runtime_error("serve: cannot bind " + host + ":" + std::to_string(port) + ": " + ec.message());
  }

  ~SessionServer() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// Serves on the calling thread until `stop`.
  void run() {
    start_io();
    ioc_.run();
  }

  /// Serves on a background thread.
  void start() {
    start_io();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

  nlohmann::json hello(Role role) const {
    return {{"type", "hello"},
            {"role", role == Role::Control ? "control" : "view"},
            {"scenario", opts_.scenario.name},
            {"variant", variant_name(opts_.variant.mode)},
            {"dt", opts_.dt},
            {"world_config", world_to_json(session_.world().config())}};
  }

  nlohmann::json state() const {
    using spark::detail::vec_json;
    const World& w = session_.world();
    nlohmann::json arms = nlohmann::json::array();
    for (std::size_t i = 0; i < kArmCount; ++i) {
      const auto& tel = session_.telemetry()[i];
      arms.push_back({{"q", vec_json(w.arm(i).q)},
                      {"g", w.arm(i).gripper},
                      {"ee_pos", vec_json(w.ee_position(i))},
                      {"wrench", vec_json(w.last_frame().arms[i].wrench.stacked())},
                      {"glove", tel.glove.intensities},
                      {"estop", w.estop(i).tripped},
                      {"mode_ratio", tel.mode_ratio}});
    }
    nlohmann::json props = nlohmann::json::array();
    for (const Prop& p : w.props()) props.push_back(prop_to_json(p));
    return {{"type", "state"},
            {"tick", w.tick()},
            {"t", w.sim_time()},
            {"active_time", session_.active_time()},
            {"estop_count", session_.estop_count()},
            {"arms", arms},
            {"props", props}};
  }

 private:
  class Connection;
  friend class Connection;

  static RunOptions disable_auto_reset(RunOptions o) {
    o.scenario.estop_reset_delay_s = -1.0;  // the operator presses reset
    return o;
  }

  void start_io() {
    if (started_) return;
    started_ = true;
    do_accept();
    next_tick_ = std::chrono::steady_clock::now();
    schedule_tick();
  }

  void do_accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(*this, std::move(socket))->start();
      do_accept();
    });
  }

  void schedule_tick() {
    next_tick_ += std::chrono::microseconds(std::llround(opts_.dt * 1e6));
    timer_.expires_at(next_tick_);
    timer_.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      on_tick();
      schedule_tick();
    });
  }

  void on_tick() {
    session_.step();
    const auto slot = static_cast<std::int64_t>(std::floor(session_.world().sim_time() * 30.0));
    if (slot != last_frame_slot_) {
      last_frame_slot_ = slot;
      broadcast(std::make_shared<const std::string>(state().dump()));
    }
  }

  void broadcast(const std::shared_ptr<const std::string>& msg) {
    std::erase_if(clients_, [](const std::weak_ptr<Connection>& c) { return c.expired(); });
    for (const auto& c : clients_) {
      if (auto p = c.lock()) p->send(msg, true);
    }
  }

  /// Returns false when the control seat is taken.
  bool admit(const std::shared_ptr<Connection>& c, Role role) {
    if (role == Role::Control) {
      if (auto cur = controller_.lock()) return false;
      controller_ = c;
    }
    clients_.push_back(c);
    return true;
  }

  void leave(const Connection* c) {
    if (controller_.lock().get() == c) {
      controller_.reset();
      live_.clear();
    }
  }

  nlohmann::json on_message(Role role, const std::string& text) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return error("bad json");
    if (role != Role::Control) return error("read only");
    const std::string type = j.value("type", "");
    try {
      if (type == "leader") {
        const auto arm = j.at("arm").get<std::size_t>();
        if (arm >= kArmCount) return error("bad arm");
        const JointVector q = spark::detail::json_vec<6>(j.at("q"), "leader.q");
        const double g = j.value("g", 1.0);
        if (!q.allFinite() || !std::isfinite(g)) return error("non-finite leader state");
        live_.set(arm, {q, g});
      } else if (type == "estop_reset") {
        const auto arm = j.at("arm").get<std::size_t>();
        if (arm >= kArmCount) return error("bad arm");
        session_.request_reset(arm);
      } else if (type == "enable" || type == "disable") {
        session_.set_enabled(type == "enable");
      } else {
        return error("unknown type");
      }
    } catch (const std::exception&) {
      return error("malformed " + type);
    }
    return nullptr;
  }

  static nlohmann::json error(const std::string& reason) { return {{"type", "error"}, {"reason", reason}}; }

  class Connection : public std::enable_shared_from_this<Connection> {
    using tcp_stream = serve_detail::beast::tcp_stream;

   public:
    Connection(SessionServer& server, tcp::socket socket) : server_(server), ws_(std::move(socket)) {}

    void start() {
      namespace http = serve_detail::http;
      http::async_read(ws_.next_layer(), buffer_, request_,
                       [self = shared_from_this()](boost::system::error_code ec, std::size_t) { self->on_request(ec); });
    }

    /// Queues a text frame. State frames are skipped for a backed-up reader.
    void send(std::shared_ptr<const std::string> msg, bool droppable = false) {
      if (closing_) return;
      if (droppable && queue_.size() > 32) return;
      queue_.push_back(std::move(msg));
      if (queue_.size() == 1) do_write();
    }

   private:
    void on_request(boost::system::error_code ec) {
      namespace http = serve_detail::http;
      namespace websocket = serve_detail::websocket;
      if (ec) return;
      const std::string target(request_.target());
      const bool known = target == "/control" || target == "/view";
      if (!websocket::is_upgrade(request_) || !known) {
        auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, request_.version());
        res->set(http::field::content_type, "text/plain");
        res->body() = "not found\n";
        res->prepare_payload();
        http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](boost::system::error_code, std::size_t) {
          boost::system::error_code ignored;
          self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both, ignored);
        });
        return;
      }
      role_ = target == "/control" ? Role::Control : Role::View;
      ws_.set_option(websocket::stream_base::timeout::suggested(serve_detail::beast::role_type::server));
      ws_.async_accept(request_, [self = shared_from_this()](boost::system::error_code e) { self->on_accept(e); });
    }

    void on_accept(boost::system::error_code ec) {
      if (ec) return;
      if (!server_.admit(shared_from_this(), role_)) {
        send(std::make_shared<const std::string>(SessionServer::error("busy").dump()));
        closing_ = true;
        return;
      }
      send(std::make_shared<const std::string>(server_.hello(role_).dump()));
      do_read();
    }

    void do_read() {
      ws_.async_read(read_buf_, [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
        if (ec) {
          self->server_.leave(self.get());
          return;
        }
        const std::string text = serve_detail::beast::buffers_to_string(self->read_buf_.data());
        self->read_buf_.consume(self->read_buf_.size());
        const auto reply = self->server_.on_message(self->role_, text);
        if (!reply.is_null()) self->send(std::make_shared<const std::string>(reply.dump()));
        self->do_read();
      });
    }

    void do_write() {
      ws_.text(true);
      ws_.async_write(serve_detail::net::buffer(*queue_.front()),
                      [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                        if (ec) {
                          self->queue_.clear();
                          self->server_.leave(self.get());
                          return;
                        }
                        self->queue_.pop_front();
                        if (!self->queue_.empty()) {
                          self->do_write();
                        } else if (self->closing_) {
                          self->ws_.async_close(serve_detail::websocket::close_code::try_again_later,
                                                [self](boost::system::error_code) {});
                        }
                      });
    }

    SessionServer& server_;
    serve_detail::websocket::stream<tcp_stream> ws_;
    serve_detail::beast::flat_buffer buffer_;
    serve_detail::beast::flat_buffer read_buf_;
    serve_detail::http::request<serve_detail::http::string_body> request_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    Role role_ = Role::View;
    bool closing_ = false;
  };

  RunOptions opts_;
  LiveLeader live_;
  Session session_;
  serve_detail::net::io_context ioc_;
  tcp::acceptor acceptor_;
  serve_detail::net::steady_timer timer_;
  std::chrono::steady_clock::time_point next_tick_;
  std::int64_t last_frame_slot_ = -1;
  std::vector<std::weak_ptr<Connection>> clients_;
  std::weak_ptr<Connection> controller_;
  std::thread thread_;
  bool started_ = false;
};

}  // namespace spark::harness
