#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace atcsim::host {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

using WsStream = websocket::stream<beast::tcp_stream>;

// One open WebSocket, either end. All stream work happens on the stream's
// strand; send() may be called from any thread.
class WsPeer : public std::enable_shared_from_this<WsPeer> {
 public:
  using OnText = std::function<void(std::string)>;
  using OnClose = std::function<void()>;

  explicit WsPeer(WsStream ws) : ws_(std::move(ws)) {}

  void start(OnText on_text, OnClose on_close) {
    net::dispatch(ws_.get_executor(), [self = shared_from_this(), t = std::move(on_text), c = std::move(on_close)]() mutable {
      self->on_text_ = std::move(t);
      self->on_close_ = std::move(c);
      self->do_read();
    });
  }

  void send(std::string text, bool close_after = false) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text), close_after]() mutable {
      if (self->closed_) return;
      self->queue_.emplace_back(std::move(text), close_after);
      if (self->queue_.size() == 1) self->do_write();
    });
  }

  WsStream& stream() { return ws_; }

  // Drops the TCP connection without a closing handshake, as a network
  // failure would.
  void abort() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (self->queue_.empty()) {
        self->do_close();
      } else {
        self->queue_.back().second = true;
      }
    });
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) return finish();
    std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (on_text_) on_text_(std::move(text));
    if (!closed_) do_read();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front().first),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
  }

  void on_write(beast::error_code ec) {
    if (ec) return finish();
    const bool close_after = queue_.front().second;
    queue_.pop_front();
    if (close_after) return do_close();
    if (!queue_.empty()) do_write();
  }

  void do_close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->finish(); });
  }

  void finish() {
    // A write may still be in flight, so the queue is left alone.
    closed_ = true;
    on_text_ = nullptr;
    if (on_close_) {
      auto cb = std::move(on_close_);
      on_close_ = nullptr;
      cb();
    }
  }

  WsStream ws_;
  beast::flat_buffer buffer_;
  std::deque<std::pair<std::string, bool>> queue_;
  OnText on_text_;
  OnClose on_close_;
  bool closed_ = false;
};

}  // namespace atcsim::host
