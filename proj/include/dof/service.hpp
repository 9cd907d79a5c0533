#pragma once

#include <atomic>
#include <deque>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "dof/steering.hpp"

namespace dof {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  unsigned threads = 1;
  WosParams wos;
  SteerConfig steer;
  std::optional<Vec3> steer_start;  // default: 1 cm above the first source
};

// A field and the data it was built from; replaced wholesale on rebuild.
struct ServedField {
  FieldBundle bundle;
  std::shared_ptr<const WorkspaceField> field;
};

inline json frame_response(const FrameQueryResult& r, const WorkspaceField& f) {
  return {{"v", schema_version},
          {"rotation", detail::array_of(r.quaternion)},
          {"distance", r.distance},
          {"diagnostics",
           {{"samples", f.params().n_samples},
            {"eps_shell", f.eps_shell()},
            {"mean_hit_distance", r.mean_hit_distance},
            {"mean_steps", r.mean_steps},
            {"walks_truncated", r.walks_truncated},
            {"hemisphere_conflict", r.hemisphere_conflict}}}};
}

inline json scene_response(const ServedField& s) {
  json pts = json::array(), nrm = json::array(), fr = json::array();
  const PointCloud& c = s.bundle.cloud;
  for (const auto& p : c.points) pts.push_back(detail::array_of(p));
  for (const auto& n : c.normals) nrm.push_back(detail::array_of(n));
  for (const auto& f : s.bundle.frames.frames) fr.push_back(detail::array_of(quat_from_matrix(f)));
  json kp = keypoints_to_json(s.bundle.keypoints);
  json src = json::array(), snk = json::array();
  for (auto i : s.bundle.keypoints.sources) src.push_back(detail::array_of(c.points.at(i)));
  for (auto i : s.bundle.keypoints.sinks) snk.push_back(detail::array_of(c.points.at(i)));
  kp["source_positions"] = std::move(src);
  kp["sink_positions"] = std::move(snk);
  return {{"v", schema_version},  {"points", std::move(pts)},       {"normals", std::move(nrm)},
          {"frames", std::move(fr)}, {"keypoints", std::move(kp)}, {"tau", s.bundle.tau_raw},
          {"eps_shell", s.field->eps_shell()}};
}

class FieldService {
 public:
  FieldService(FieldBundle bundle, ServiceOptions opt) : opt_(std::move(opt)), acceptor_(ioc_) {
    validate(opt_.steer);
    install(std::move(bundle));
  }
  ~FieldService() { stop(); }

  // Binds and starts the worker threads; returns the bound port.
  unsigned short start() {
    tcp::endpoint ep(net::ip::make_address(opt_.address), opt_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(net::socket_base::max_listen_connections);
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    for (unsigned i = 0; i < std::max(1u, opt_.threads); ++i) workers_.emplace_back([this] { ioc_.run(); });
    return port_;
  }

  void wait() {
    for (auto& t : workers_)
      if (t.joinable()) t.join();
  }

  void stop() {
    ioc_.stop();
    wait();
    if (rebuilder_.joinable()) rebuilder_.join();
  }

  unsigned short port() const { return port_; }
  bool busy() const { return busy_.load(); }
  const ServiceOptions& options() const { return opt_; }

  std::shared_ptr<const ServedField> current() const {
    std::lock_guard lock(mutex_);
    return served_;
  }

  // Rebuilds the field at a new diffusion time in the background; false if one is running.
  bool rebuild(double tau_raw) {
    bool expected = false;
    if (!busy_.compare_exchange_strong(expected, true)) return false;
    if (rebuilder_.joinable()) rebuilder_.join();
    auto old = current();
    rebuilder_ = std::thread([this, old, tau_raw] {
      try {
        ObjectFieldOptions fo;
        fo.tau_raw = tau_raw;
        fo.wos = opt_.wos;
        install(bundle_of(build_object_field(old->bundle.cloud, old->bundle.keypoints, fo)));
      } catch (const Error&) {
      }
      busy_ = false;
    });
    return true;
  }

  // Holds the service in the busy state until release_busy(); for maintenance and tests.
  bool hold_busy() {
    bool expected = false;
    return busy_.compare_exchange_strong(expected, true);
  }
  void release_busy() { busy_ = false; }

  Vec3 default_start() const {
    if (opt_.steer_start) return *opt_.steer_start;
    auto s = current();
    const auto& c = s->bundle.cloud;
    std::size_t v = s->bundle.keypoints.sources.at(0);
    Vec3 n = c.has_normals() ? c.normals[v] : s->bundle.frames.frames[v].col(2);
    return c.points[v] + 0.01 * n;
  }

  http::response<http::string_body> handle(const http::request<http::string_body>& req);

 private:
  void install(FieldBundle b) {
    auto s = std::make_shared<ServedField>();
    s->field = std::make_shared<const WorkspaceField>(b.workspace(opt_.wos));
    s->bundle = std::move(b);
    std::lock_guard lock(mutex_);
    served_ = std::move(s);
  }

  void do_accept();

  ServiceOptions opt_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::vector<std::thread> workers_;
  std::thread rebuilder_;
  mutable std::mutex mutex_;
  std::shared_ptr<const ServedField> served_;
  std::atomic<bool> busy_{false};
  unsigned short port_ = 0;
};

namespace detail {

inline http::response<http::string_body> json_reply(http::status st, const json& body, unsigned version,
                                                    bool keep_alive) {
  http::response<http::string_body> res{st, version};
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(keep_alive);
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

inline http::status status_of(ErrorKind k) {
  return is_numerical(k) ? http::status::unprocessable_entity : http::status::bad_request;
}

// One steering connection: commands are queued and consumed one tick at a time on a
// fixed-period timer; every tick streams one pose message.
class SteerConnection : public std::enable_shared_from_this<SteerConnection> {
 public:
  SteerConnection(tcp::socket&& socket, FieldService& svc)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), svc_(svc) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, beast::bind_front_handler(&SteerConnection::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    try {
      field_ = svc_.current()->field;
      session_.emplace(field_, svc_.default_start(), svc_.options().steer);
      send(hello());
    } catch (const Error& e) {
      send(error_message(to_string(e.kind()), e.what()));
    }
    period_ = std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / svc_.options().steer.rate_hz));
    next_ = std::chrono::steady_clock::now() + period_;
    arm();
    read();
  }

  json hello() const {
    json j = pose_to_json(session_->state());
    j["type"] = "state";
    j["rate_hz"] = session_->config().rate_hz;
    j["step"] = session_->config().step();
    return j;
  }

  void read() {
    ws_.async_read(in_, beast::bind_front_handler(&SteerConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      timer_.cancel();
      return;
    }
    std::string text = beast::buffers_to_string(in_.data());
    in_.consume(in_.size());
    try {
      json j = parse_json(text);
      require(j.is_object(), ErrorKind::format, "message must be a JSON object");
      std::string type = get_or<std::string>(j, "type", "axes");
      if (type == "axes") {
        require(session_.has_value(), ErrorKind::parameter, "session has no start pose");
        AxisCommand c = parse_axis_command(j, session_->config());
        pending_.push_back({c.a, session_->ticks_for(c)});
      } else if (type == "start") {
        require(get_or(j, "v", schema_version) == schema_version, ErrorKind::format, "unsupported message version");
        Vec3 x = j.contains("x") ? vec3_of(j.at("x")) : svc_.default_start();
        field_ = svc_.current()->field;
        session_.emplace(field_, x, svc_.options().steer);
        pending_.clear();
        send(hello());
      } else if (type == "stop") {
        pending_.clear();
      } else {
        throw Error(ErrorKind::format, "unknown message type '" + type + "'");
      }
    } catch (const Error& e) {
      send(error_message(to_string(e.kind()), e.what()));
    }
    read();
  }

  void arm() {
    timer_.expires_at(next_);
    timer_.async_wait(beast::bind_front_handler(&SteerConnection::on_tick, shared_from_this()));
  }

  void on_tick(beast::error_code ec) {
    if (ec || closed_) return;
    next_ += period_;
    if (!pending_.empty() && session_) {
      if (svc_.busy()) {
        if (!busy_sent_) send({{"v", schema_version}, {"type", "busy"}});
        busy_sent_ = true;
      } else {
        busy_sent_ = false;
        try {
          auto f = svc_.current()->field;
          if (f != field_) session_->set_field(field_ = f);
          auto& [a, left] = pending_.front();
          send(pose_to_json(session_->tick(a)));
          if (--left == 0) pending_.pop_front();
        } catch (const Error& e) {
          pending_.clear();
          send(error_message(to_string(e.kind()), e.what()));
        }
      }
    }
    // Late ticks are not made up for; the schedule restarts from now.
    auto now = std::chrono::steady_clock::now();
    if (next_ < now) next_ = now;
    arm();
  }

  void send(const json& j) {
    out_.push_back(std::make_shared<std::string>(j.dump()));
    if (out_.size() == 1) write_front();
  }

  void write_front() {
    ws_.async_write(net::buffer(*out_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->closed_ = true;
                        self->timer_.cancel();
                        return;
                      }
                      self->out_.pop_front();
                      if (!self->out_.empty()) self->write_front();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  net::steady_timer timer_;
  FieldService& svc_;
  beast::flat_buffer in_;
  std::deque<std::shared_ptr<std::string>> out_;
  std::deque<std::pair<Vec3, std::int64_t>> pending_;
  std::optional<SteeringSession> session_;
  std::shared_ptr<const WorkspaceField> field_;
  std::chrono::nanoseconds period_{};
  std::chrono::steady_clock::time_point next_;
  bool closed_ = false;
  bool busy_sent_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, FieldService& svc) : stream_(std::move(socket)), svc_(svc) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::read, shared_from_this()));
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buf_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/steer") {
        stream_.expires_never();
        std::make_shared<SteerConnection>(stream_.release_socket(), svc_)->run(std::move(req_));
        return;
      }
    }
    res_ = std::make_shared<http::response<http::string_body>>(svc_.handle(req_));
    http::async_write(stream_, *res_, beast::bind_front_handler(&HttpConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!res_->keep_alive()) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    read();
  }

  beast::tcp_stream stream_;
  FieldService& svc_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

}  // namespace detail

inline http::response<http::string_body> FieldService::handle(const http::request<http::string_body>& req) {
  using detail::json_reply;
  unsigned ver = req.version();
  bool ka = req.keep_alive();
  std::string target(req.target());
  auto fail = [&](http::status st, const std::string& kind, const std::string& msg) {
    return json_reply(st, error_message(kind, msg), ver, ka);
  };
  try {
    if (target == "/frame") {
      if (req.method() != http::verb::post) return fail(http::status::method_not_allowed, "format", "use POST");
      if (busy()) return json_reply(http::status::service_unavailable, {{"v", schema_version}, {"type", "busy"}}, ver, ka);
      json j = parse_json(req.body());
      require(j.is_object() && j.contains("x"), ErrorKind::format, "frame query needs x");
      require(detail::get_or(j, "v", schema_version) == schema_version, ErrorKind::format, "unsupported message version");
      Vec3 x = detail::vec3_of(j.at("x"));
      auto s = current();
      return json_reply(http::status::ok, frame_response(query_frame(*s->field, x), *s->field), ver, ka);
    }
    if (target == "/scene") {
      if (busy()) return json_reply(http::status::service_unavailable, {{"v", schema_version}, {"type", "busy"}}, ver, ka);
      return json_reply(http::status::ok, scene_response(*current()), ver, ka);
    }
    if (target == "/rebuild") {
      if (req.method() != http::verb::post) return fail(http::status::method_not_allowed, "format", "use POST");
      json j = parse_json(req.body());
      require(j.is_object() && j.contains("tau") && j.at("tau").is_number(), ErrorKind::format, "rebuild needs tau");
      double tau = j.at("tau").get<double>();
      require(tau >= 0 && std::isfinite(tau), ErrorKind::parameter, "tau must be non-negative");
      if (!rebuild(tau)) return json_reply(http::status::service_unavailable, {{"v", schema_version}, {"type", "busy"}}, ver, ka);
      return json_reply(http::status::accepted, {{"v", schema_version}, {"type", "rebuilding"}, {"tau", tau}}, ver, ka);
    }
    return fail(http::status::not_found, "format", "unknown endpoint " + target);
  } catch (const Error& e) {
    return fail(detail::status_of(e.kind()), to_string(e.kind()), e.what());
  }
}

inline void FieldService::do_accept() {
  acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
    if (!ec) std::make_shared<detail::HttpConnection>(std::move(socket), *this)->run();
    if (acceptor_.is_open()) do_accept();
  });
}

}  // namespace dof
