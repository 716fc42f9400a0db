#pragma once

#include <atomic>
#include <chrono>
#include <future>
#include <map>
#include <memory>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "atcsim/host/host.hpp"
#include "atcsim/host/session.hpp"
#include "atcsim/host/ws_peer.hpp"
#include "atcsim/protocol/message.hpp"

namespace atcsim::host {

namespace http = beast::http;

struct ServerConfig {
  std::string address = "0.0.0.0";
  unsigned short port = 9100;  // 0 picks a free port
  int threads = 2;
};

struct ActorStats {
  std::uint64_t timer_ticks = 0;
  std::chrono::microseconds max_tick_time{0};  // session work plus encoding and hand-off
};

// Runs one Session on its own strand and drives its timers.
class SessionActor {
 public:
  SessionActor(net::io_context& ioc, Session& session)
      : session_(session), strand_(net::make_strand(ioc)), tick_timer_(strand_), pointer_timer_(strand_) {}

  void start() {
    net::dispatch(strand_, [this] {
      next_tick_ = std::chrono::steady_clock::now() + period();
      arm_tick();
      arm_pointer();
    });
  }

  void stop() {
    net::dispatch(strand_, [this] {
      tick_timer_.cancel();
      pointer_timer_.cancel();
    });
  }

  void attach(ConnectionId id, std::weak_ptr<WsPeer> peer) {
    net::post(strand_, [this, id, peer = std::move(peer)] { peers_[id] = peer; });
  }

  void receive(ConnectionId id, protocol::Message msg) {
    net::post(strand_, [this, id, msg = std::move(msg)]() mutable { deliver(session_.receive(id, std::move(msg))); });
  }

  void disconnect(ConnectionId id) {
    net::post(strand_, [this, id] {
      peers_.erase(id);
      deliver(session_.disconnect(id));
    });
  }

  // Runs f(session) on the strand and waits for the result.
  template <class F>
  auto query(F f) -> decltype(f(std::declval<Session&>())) {
    using R = decltype(f(std::declval<Session&>()));
    std::promise<R> p;
    auto fut = p.get_future();
    net::post(strand_, [&] {
      try {
        if constexpr (std::is_void_v<R>) {
          f(session_);
          p.set_value();
        } else {
          p.set_value(f(session_));
        }
      } catch (...) {
        p.set_exception(std::current_exception());
      }
    });
    return fut.get();
  }

  ActorStats stats() {
    return query([this](Session&) { return stats_; });
  }

 private:
  std::chrono::steady_clock::duration period() const {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(session_.runner().scenario().tick_seconds));
  }

  void arm_tick() {
    tick_timer_.expires_at(next_tick_);
    tick_timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      const auto t0 = std::chrono::steady_clock::now();
      deliver(session_.on_timer());
      const auto dt = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);
      ++stats_.timer_ticks;
      if (dt > stats_.max_tick_time) stats_.max_tick_time = dt;
      next_tick_ += period();
      // Never try to catch up on a backlog of missed ticks.
      const auto now = std::chrono::steady_clock::now();
      if (next_tick_ < now) next_tick_ = now;
      arm_tick();
    });
  }

  void arm_pointer() {
    pointer_timer_.expires_after(protocol::PointerThrottle::kInterval);
    pointer_timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      deliver(session_.flush_pointers());
      arm_pointer();
    });
  }

  void deliver(Outbox out) {
    for (auto& o : out) {
      const auto it = peers_.find(o.connection);
      if (it == peers_.end()) continue;
      if (auto peer = it->second.lock()) {
        peer->send(protocol::encode_message(o.message), o.message.is<protocol::Bye>());
      }
    }
  }

  Session& session_;
  net::strand<net::io_context::executor_type> strand_;
  net::steady_timer tick_timer_;
  net::steady_timer pointer_timer_;
  std::chrono::steady_clock::time_point next_tick_;
  std::map<ConnectionId, std::weak_ptr<WsPeer>> peers_;
  ActorStats stats_;
};

// WebSocket endpoint for all sessions of a Host, plus GET /healthz on the
// same port. Sessions must be created before start().
class Server {
 public:
  Server(Host& host, ServerConfig cfg) : host_(host), cfg_(std::move(cfg)), acceptor_(ioc_) {}
  ~Server() { stop(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts serving on background threads. Throws std::system_error
  // naming the port if it cannot bind.
  void start() {
    beast::error_code ec;
    const tcp::endpoint ep{net::ip::make_address(cfg_.address, ec), cfg_.port};
    if (ec) throw std::system_error(ec, "address " + cfg_.address);
    const auto fail = [&](const char* what) {
      throw std::system_error(ec, std::string(what) + " port " + std::to_string(cfg_.port));
    };
    acceptor_.open(ep.protocol(), ec);
    if (ec) fail("open");
    acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    acceptor_.bind(ep, ec);
    if (ec) fail("bind");
    acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) fail("listen");

    for (const auto& [id, session] : host_.sessions()) {
      actors_.emplace(id, std::make_unique<SessionActor>(ioc_, *session));
    }
    for (auto& [_, a] : actors_) a->start();
    started_ = std::chrono::steady_clock::now();
    do_accept();
    for (int i = 0; i < std::max(1, cfg_.threads); ++i) threads_.emplace_back([this] { ioc_.run(); });
  }

  void stop() {
    if (threads_.empty()) return;
    for (auto& [_, a] : actors_) a->stop();
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
    });
    ioc_.stop();
    for (auto& t : threads_) t.join();
    threads_.clear();
  }

  // Blocks the calling thread until stop() is called elsewhere.
  void wait() {
    for (auto& t : threads_) t.join();
    threads_.clear();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  SessionActor* actor(const std::string& session_id) {
    const auto it = actors_.find(session_id);
    return it == actors_.end() ? nullptr : it->second.get();
  }

  nlohmann::json health() const {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& [id, _] : actors_) ids.push_back(id);
    return {{"status", "ok"},
            {"sessions", actors_.size()},
            {"blocks", host_.blocks().size()},
            {"session_ids", ids},
            {"uptime_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count()}};
  }

 private:
  class Connection;
  class HttpSession;

  void do_accept();

  Host& host_;
  ServerConfig cfg_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::map<std::string, std::unique_ptr<SessionActor>> actors_;
  std::vector<std::thread> threads_;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
  std::atomic<ConnectionId> next_connection_{0};
};

// Frames from one client, routed to the session named in its HELLO.
class Server::Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(Server& server, std::shared_ptr<WsPeer> peer)
      : server_(server), peer_(std::move(peer)), id_(++server.next_connection_) {}

  void start() {
    auto self = shared_from_this();
    peer_->start([self](std::string text) { self->on_text(std::move(text)); },
                 [self] {
                   if (self->actor_) self->actor_->disconnect(self->id_);
                 });
  }

 private:
  void on_text(std::string text) {
    protocol::Message msg;
    try {
      msg = protocol::decode_message(text);
    } catch (const Error& e) {
      const auto reason = e.code() == ErrorCode::VersionError ? RejectReason::Version : RejectReason::BadRequest;
      peer_->send(protocol::encode_message(
          protocol::make_message("", "host", 0, 0, protocol::Reject{reason, e.what(), std::nullopt})));
      return;
    }
    if (!actor_) {
      if (msg.is<protocol::Hello>()) actor_ = server_.actor(msg.session_id);
      if (!actor_) {
        const auto reason = msg.is<protocol::Hello>() ? RejectReason::NoSuchSession : RejectReason::NotJoined;
        peer_->send(protocol::encode_message(
            protocol::make_message(msg.session_id, "host", 0, 0, protocol::Reject{reason, msg.session_id, msg.seq})));
        return;
      }
      actor_->attach(id_, peer_);
    }
    actor_->receive(id_, std::move(msg));
  }

  Server& server_;
  std::shared_ptr<WsPeer> peer_;
  ConnectionId id_;
  SessionActor* actor_ = nullptr;  // touched only on the peer's strand
};

// First request on a socket: a WebSocket upgrade or a plain HTTP request.
class Server::HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(Server& server, tcp::socket socket) : server_(server), stream_(std::move(socket)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

 private:
  void on_read(beast::error_code ec) {
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      auto peer = std::make_shared<WsPeer>(WsStream(std::move(stream_)));
      peer->stream().set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      peer->stream().async_accept(req_, [self = shared_from_this(), peer](beast::error_code ec2) {
        if (ec2) return;
        std::make_shared<Connection>(self->server_, peer)->start();
      });
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    if (req_.method() == http::verb::get && req_.target() == "/healthz") {
      res->result(http::status::ok);
      res->set(http::field::content_type, "application/json");
      res->body() = server_.health().dump();
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  Server& server_;
  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

inline void Server::do_accept() {
  acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted || !acceptor_.is_open()) return;
    if (!ec) std::make_shared<HttpSession>(*this, std::move(socket))->run();
    do_accept();
  });
}

}  // namespace atcsim::host
