#include "diffbot/bridge.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace diffbot::bridge {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Frame parsing

namespace {

std::vector<std::string> topic_list(const json& value) {
  if (!value.is_array()) {
    throw std::invalid_argument("subscription must be an array of topic names");
  }
  std::vector<std::string> topics;
  bus::TopicRegistry known;
  bus::declare_standard_topics(known);
  for (const json& t : value) {
    if (!t.is_string() || !known.declared(t.get<std::string>())) {
      throw std::invalid_argument("unknown topic in subscription: " + t.dump());
    }
    topics.push_back(t.get<std::string>());
  }
  return topics;
}

}  // namespace

ParsedFrame parse_inbound(std::string_view text) {
  json frame = json::parse(text, nullptr, false);
  if (frame.is_discarded()) {
    return FrameError{"malformed JSON"};
  }
  if (!frame.is_object()) {
    return FrameError{"frame must be a JSON object"};
  }
  try {
    if (frame.contains("subscribe")) {
      return SubscribeRequest{topic_list(frame.at("subscribe")), true};
    }
    if (frame.contains("unsubscribe")) {
      return SubscribeRequest{topic_list(frame.at("unsubscribe")), false};
    }
    const auto topic_it = frame.find("topic");
    if (topic_it == frame.end() || !topic_it->is_string()) {
      return FrameError{"frame needs a string 'topic'"};
    }
    const std::string topic = topic_it->get<std::string>();
    const json data = frame.value("data", json::object());
    if (topic == bus::topics::kTeleopKey) {
      return InboundCommand{
          std::get<bus::TeleopKey>(bus::payload_from_json(bus::PayloadKind::Key, data))};
    }
    if (topic == bus::topics::kEstopReset) {
      return InboundCommand{bus::Empty{}};
    }
    if (topic == bus::topics::kGoal) {
      return InboundCommand{
          std::get<Pose2D>(bus::payload_from_json(bus::PayloadKind::Pose, data))};
    }
    return FrameError{"topic '" + topic + "' is not accepted from clients"};
  } catch (const std::exception& e) {
    return FrameError{e.what()};
  }
}

std::string error_frame(const std::string& message, std::int64_t tick) {
  return json{{"topic", "error"}, {"tick", tick}, {"data", {{"message", message}}}}
      .dump();
}

void OutboundQueue::push(std::shared_ptr<const std::string> frame) {
  if (capacity_ == 0) {
    ++dropped_;
    return;
  }
  if (frames_.size() >= capacity_) {
    frames_.pop_front();
    ++dropped_;
  }
  frames_.push_back(std::move(frame));
}

// ---------------------------------------------------------------------------
// Server

namespace {

constexpr const char* kStubPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>diffbot</title>"
    "</head><body><h1>diffbot bridge</h1><p>No UI bundle configured. Connect a "
    "WebSocket client to this address and send "
    "<code>{\"subscribe\": [\"odom\"]}</code>.</p></body></html>";

std::string mime_type(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

class WsSession;

}  // namespace

struct Bridge::Impl {
  explicit Impl(BridgeOptions opts) : options(std::move(opts)) {}

  BridgeOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread thread;

  mutable std::mutex sessions_mutex;
  std::vector<std::shared_ptr<WsSession>> sessions;

  std::mutex inbound_mutex;
  std::vector<InboundCommand> inbound;

  std::atomic<std::uint64_t> dropped{0};
  std::atomic<std::int64_t> last_tick{0};
  std::atomic<bool> stopped{false};

  void add_session(std::shared_ptr<WsSession> session) {
    std::lock_guard lock(sessions_mutex);
    sessions.push_back(std::move(session));
  }
  void remove_session(const WsSession* session) {
    std::lock_guard lock(sessions_mutex);
    std::erase_if(sessions, [session](const auto& s) { return s.get() == session; });
  }
  void push_inbound(InboundCommand command) {
    std::lock_guard lock(inbound_mutex);
    inbound.push_back(std::move(command));
  }

  http::response<http::string_body> serve_static(
      const http::request<http::string_body>& req) const;
  void do_accept();
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Bridge::Impl* impl)
      : ws_(std::move(socket)), impl_(impl), queue_(impl->options.max_queue) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(
        websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept,
                                                    shared_from_this()));
  }

  bool wants(const std::string& topic) const { return topics_.contains(topic); }

  void send(std::shared_ptr<const std::string> frame) {
    const std::uint64_t before = queue_.dropped();
    queue_.push(std::move(frame));
    impl_->dropped += queue_.dropped() - before;
    if (!writing_) {
      do_write();
    }
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      return;
    }
    impl_->add_session(shared_from_this());
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read,
                                                      shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      impl_->remove_session(this);
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    handle(text);
    do_read();
  }

  void handle(const std::string& text) {
    const ParsedFrame parsed = parse_inbound(text);
    if (const auto* command = std::get_if<InboundCommand>(&parsed)) {
      impl_->push_inbound(*command);
    } else if (const auto* request = std::get_if<SubscribeRequest>(&parsed)) {
      for (const auto& topic : request->topics) {
        if (request->subscribe) {
          topics_.insert(topic);
        } else {
          topics_.erase(topic);
        }
      }
    } else {
      send(std::make_shared<const std::string>(
          error_frame(std::get<FrameError>(parsed).message, impl_->last_tick)));
    }
  }

  void do_write() {
    if (queue_.empty()) {
      writing_ = false;
      return;
    }
    writing_ = true;
    inflight_ = queue_.front();
    queue_.pop();
    ws_.text(true);
    ws_.async_write(asio::buffer(*inflight_),
                    beast::bind_front_handler(&WsSession::on_write,
                                              shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    inflight_.reset();
    if (ec) {
      writing_ = false;
      impl_->remove_session(this);
      return;
    }
    if (queue_.empty() && queue_.dropped() != reported_drops_) {
      reported_drops_ = queue_.dropped();
      queue_.push(std::make_shared<const std::string>(
          json{{"topic", "bridge_status"},
               {"tick", impl_->last_tick.load()},
               {"data", {{"dropped", reported_drops_}}}}
              .dump()));
    }
    do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Bridge::Impl* impl_;
  beast::flat_buffer buffer_;
  OutboundQueue queue_;
  std::shared_ptr<const std::string> inflight_;
  std::set<std::string> topics_;
  std::uint64_t reported_drops_{0};
  bool writing_{false};
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Bridge::Impl* impl)
      : stream_(std::move(socket)), impl_(impl) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read,
                                               shared_from_this()));
  }

 private:
  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      return;
    }
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), impl_)
          ->run(std::move(req_));
      return;
    }
    response_ = std::make_shared<http::response<http::string_body>>(
        impl_->serve_static(req_));
    http::async_write(stream_, *response_,
                      beast::bind_front_handler(&HttpSession::on_write,
                                                shared_from_this()));
  }

  void on_write(beast::error_code, std::size_t) {
    beast::error_code ignored;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
  }

  beast::tcp_stream stream_;
  Bridge::Impl* impl_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> response_;
};

}  // namespace

http::response<http::string_body> Bridge::Impl::serve_static(
    const http::request<http::string_body>& req) const {
  auto reply = [&](http::status status, std::string type, std::string body) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::content_type, type);
    res.keep_alive(false);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  if (req.method() != http::verb::get) {
    return reply(http::status::bad_request, "text/plain", "GET only\n");
  }
  std::string target(req.target());
  target = target.substr(0, target.find('?'));
  if (target.find("..") != std::string::npos) {
    return reply(http::status::bad_request, "text/plain", "bad path\n");
  }
  if (target.empty() || target.back() == '/') {
    target += "index.html";
  }
  if (!options.static_dir.empty()) {
    const auto path = options.static_dir / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::stringstream body;
      body << in.rdbuf();
      return reply(http::status::ok, mime_type(path), body.str());
    }
  }
  if (target == "/index.html") {
    return reply(http::status::ok, "text/html", kStubPage);
  }
  return reply(http::status::not_found, "text/plain", "not found\n");
}

void Bridge::Impl::do_accept() {
  acceptor.async_accept(asio::make_strand(ioc),
                        [this](beast::error_code ec, tcp::socket socket) {
                          if (ec) {
                            return;  // acceptor closed
                          }
                          std::make_shared<HttpSession>(std::move(socket), this)->run();
                          do_accept();
                        });
}

Bridge::Bridge(BridgeOptions options)
    : impl_(std::make_shared<Impl>(std::move(options))) {
  try {
    const auto address = asio::ip::make_address(impl_->options.address);
    const tcp::endpoint endpoint{address, impl_->options.port};
    impl_->acceptor.open(endpoint.protocol());
    impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor.bind(endpoint);
    impl_->acceptor.listen(asio::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw BridgeStartupError("cannot listen on " + impl_->options.address + ":" +
                             std::to_string(impl_->options.port) + ": " + e.what());
  }
  impl_->do_accept();
  impl_->thread = std::thread([impl = impl_.get()] { impl->ioc.run(); });
}

Bridge::~Bridge() { stop(); }

unsigned short Bridge::port() const {
  return impl_->acceptor.local_endpoint().port();
}

void Bridge::publish(const bus::Envelope& envelope) {
  impl_->last_tick = envelope.tick;
  auto frame = std::make_shared<const std::string>(bus::to_json(envelope).dump());
  asio::post(impl_->ioc, [impl = impl_.get(), topic = envelope.topic,
                          frame = std::move(frame)] {
    std::vector<std::shared_ptr<WsSession>> targets;
    {
      std::lock_guard lock(impl->sessions_mutex);
      targets = impl->sessions;
    }
    for (const auto& session : targets) {
      if (session->wants(topic)) {
        session->send(frame);
      }
    }
  });
}

std::vector<InboundCommand> Bridge::drain() {
  std::lock_guard lock(impl_->inbound_mutex);
  std::vector<InboundCommand> out;
  out.swap(impl_->inbound);
  return out;
}

std::size_t Bridge::client_count() const {
  std::lock_guard lock(impl_->sessions_mutex);
  return impl_->sessions.size();
}

std::uint64_t Bridge::dropped_frames() const { return impl_->dropped; }

void Bridge::stop() {
  if (impl_->stopped.exchange(true)) {
    return;
  }
  asio::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ignored;
    impl->acceptor.close(ignored);
  });
  impl_->ioc.stop();
  if (impl_->thread.joinable()) {
    impl_->thread.join();
  }
  std::lock_guard lock(impl_->sessions_mutex);
  impl_->sessions.clear();
}

}  // namespace diffbot::bridge
