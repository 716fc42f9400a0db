#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "atcsim/host/ws_peer.hpp"
#include "atcsim/protocol/message.hpp"
#include "atcsim/protocol/mirror.hpp"

namespace atcsim::host {

// Blocking client for scripts and tests. Incoming frames are decoded on a
// background thread, fed to a PictureTracker and queued for wait_for().
class Client {
 public:
  using Predicate = std::function<bool(const protocol::Message&)>;

  Client(const std::string& host, unsigned short port, std::string session_id, std::string name = "client")
      : session_id_(std::move(session_id)), name_(std::move(name)) {
    tcp::resolver resolver(ioc_);
    WsStream ws(net::make_strand(ioc_));
    beast::get_lowest_layer(ws).connect(resolver.resolve(host, std::to_string(port)));
    ws.handshake(host + ":" + std::to_string(port), "/");
    peer_ = std::make_shared<WsPeer>(std::move(ws));
    peer_->start([this](std::string text) { on_text(std::move(text)); },
                 [this] {
                   std::lock_guard lock(mu_);
                   closed_ = true;
                   cv_.notify_all();
                 });
    thread_ = std::thread([this] { ioc_.run(); });
  }

  ~Client() {
    net::post(ioc_, [this] { heartbeat_.cancel(); });
    peer_->close();
    {
      std::unique_lock lock(mu_);
      cv_.wait_for(lock, std::chrono::seconds(2), [this] { return closed_; });
    }
    ioc_.stop();
    thread_.join();
  }

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  // Sends with the next sequence number; returns it.
  template <class P>
  std::uint64_t send(P payload) {
    // Frames must leave in seq order even when the heartbeat thread sends.
    std::lock_guard lock(send_mu_);
    const std::uint64_t seq = ++seq_;
    send_raw(protocol::encode_message(protocol::make_message(session_id_, name_, seq, 0, std::move(payload))));
    ++sent_;
    return seq;
  }

  // Sends a plain HEARTBEAT every `period` until the client is destroyed.
  void start_heartbeat(std::chrono::milliseconds period) {
    net::post(ioc_, [this, period] {
      heartbeat_period_ = period;
      arm_heartbeat();
    });
  }

  // Simulates a network failure: the socket goes away without a close frame.
  void drop() { peer_->abort(); }

  void send_raw(std::string text) { peer_->send(std::move(text)); }
  void set_seq(std::uint64_t seq) {
    std::lock_guard lock(send_mu_);
    seq_ = seq;
  }
  std::uint64_t seq() {
    std::lock_guard lock(send_mu_);
    return seq_;
  }
  std::uint64_t sent() const { return sent_; }

  // Removes and returns the first queued message matching pred.
  std::optional<protocol::Message> wait_for(const Predicate& pred,
                                            std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    std::unique_lock lock(mu_);
    std::optional<protocol::Message> found;
    cv_.wait_for(lock, timeout, [&] {
      for (auto it = inbox_.begin(); it != inbox_.end(); ++it) {
        if (pred(*it)) {
          found = std::move(*it);
          inbox_.erase(it);
          return true;
        }
      }
      return closed_;
    });
    return found;
  }

  template <class T>
  std::optional<protocol::Message> wait_for(std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    return wait_for([](const protocol::Message& m) { return m.is<T>(); }, timeout);
  }

  // Joins and returns the WELCOME, or the REJECT that refused us.
  protocol::Message hello(protocol::Hello h) {
    send(std::move(h));
    auto m = wait_for([](const protocol::Message& x) { return x.is<protocol::Welcome>() || x.is<protocol::Reject>(); });
    if (!m) throw std::runtime_error(name_ + ": no answer to HELLO");
    if (m->is<protocol::Welcome>()) {
      const auto& w = m->as<protocol::Welcome>();
      {
        std::lock_guard lock(send_mu_);
        // A resumed identity continues its old sequence.
        if (w.last_seq > seq_) seq_ = w.last_seq;
      }
      std::lock_guard lock(mu_);
      client_id_ = w.client_id;
    }
    return *m;
  }

  std::vector<protocol::Message> drain() {
    std::lock_guard lock(mu_);
    std::vector<protocol::Message> out(std::make_move_iterator(inbox_.begin()), std::make_move_iterator(inbox_.end()));
    inbox_.clear();
    return out;
  }

  protocol::PictureTracker tracker() const {
    std::lock_guard lock(mu_);
    return tracker_;
  }

  std::size_t received() const {
    std::lock_guard lock(mu_);
    return received_;
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  std::string client_id() const {
    std::lock_guard lock(mu_);
    return client_id_;
  }

  // Answers picture frames that fail to apply with a resync request.
  void set_auto_resync(bool on) { auto_resync_ = on; }

 private:
  void arm_heartbeat() {
    heartbeat_.expires_after(heartbeat_period_);
    heartbeat_.async_wait([this](beast::error_code ec) {
      if (ec || closed()) return;
      send(protocol::Heartbeat{});
      arm_heartbeat();
    });
  }

  void on_text(std::string text) {
    protocol::Message m;
    try {
      m = protocol::decode_message(text);
    } catch (const Error&) {
      return;
    }
    bool resync = false;
    std::string digest;
    {
      std::lock_guard lock(mu_);
      ++received_;
      if (!tracker_.apply(m) && auto_resync_) {
        resync = true;
        digest = tracker_.digest();
      }
      inbox_.push_back(std::move(m));
    }
    cv_.notify_all();
    if (resync) send(protocol::Heartbeat{digest});
  }

  std::string session_id_;
  std::string name_;
  net::io_context ioc_;
  net::steady_timer heartbeat_{ioc_};
  std::chrono::milliseconds heartbeat_period_{1000};
  std::shared_ptr<WsPeer> peer_;
  std::thread thread_;
  std::mutex send_mu_;
  std::uint64_t seq_ = 0;
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<bool> auto_resync_{true};

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<protocol::Message> inbox_;
  protocol::PictureTracker tracker_;
  std::size_t received_ = 0;
  bool closed_ = false;
  std::string client_id_;
};

}  // namespace atcsim::host
