#include "dof/service.hpp"
#include "dof/shapes.hpp"
#include "test_util.hpp"

using namespace dof;

namespace {

constexpr double R = 0.1;

const FieldBundle& sphere_bundle() {
  static const FieldBundle b = [] {
    PointCloud c = shapes::fibonacci_sphere(2000, R);
    KdTree t(c.points);
    KeypointSet kp;
    kp.sources = {t.nearest(Vec3(0, 0, R)).index};
    kp.sinks = {t.nearest(Vec3(0, 0, -R)).index};
    return bundle_of(build_object_field(c, kp));
  }();
  return b;
}

ServiceOptions test_options() {
  ServiceOptions o;
  o.port = 0;
  o.steer.rate_hz = 200;  // faster ticks keep the tests short
  o.steer_start = Vec3(R + 0.01, 0, 0);
  return o;
}

struct Client {
  net::io_context ioc;
  beast::tcp_stream stream{ioc};

  explicit Client(unsigned short port) { stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port)); }

  http::response<http::string_body> request(http::verb verb, const std::string& target, const std::string& body) {
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "localhost");
    req.keep_alive(true);
    req.body() = body;
    req.prepare_payload();
    http::write(stream, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(stream, buf, res);
    return res;
  }
};

struct SteerClient {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit SteerClient(unsigned short port) {
    ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws.handshake("localhost", "/steer");
    ws.text(true);
  }
  void send(const std::string& s) { ws.write(net::buffer(s)); }
  json receive() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
};

Vec3 vec3(const json& j) { return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>()); }

}  // namespace

TEST(Service, FrameMatchesLibraryQueryExactly) {
  FieldService svc(sphere_bundle(), test_options());
  unsigned short port = svc.start();
  Client c(port);
  WorkspaceField lib = sphere_bundle().workspace();
  const Vec3 xs[] = {sphere_bundle().cloud.points[17], Vec3(0.13, 0.02, -0.04), Vec3(0, 0.2, 0.1)};
  for (const Vec3& x : xs) {
    json q{{"v", 1}, {"x", {x(0), x(1), x(2)}}};
    auto res = c.request(http::verb::post, "/frame", q.dump());
    ASSERT_EQ(res.result(), http::status::ok) << res.body();
    json j = json::parse(res.body());
    EXPECT_EQ(j["v"], 1);
    FrameQueryResult r = query_frame(lib, x);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(j["rotation"][i].get<double>(), r.quaternion(i));
    EXPECT_EQ(j["distance"].get<double>(), r.distance);
    EXPECT_EQ(j["diagnostics"]["samples"], lib.params().n_samples);
  }
  // A surface vertex returns its own frame.
  Vec3 v = sphere_bundle().cloud.points[17];
  json j = json::parse(c.request(http::verb::post, "/frame", json{{"x", {v(0), v(1), v(2)}}}.dump()).body());
  Vec4 q(j["rotation"][0], j["rotation"][1], j["rotation"][2], j["rotation"][3]);
  EXPECT_LT(rotation_angle(matrix_from_quat(q), sphere_bundle().frames.frames[17]), 1e-9);
}

TEST(Service, MalformedRequestKeepsConnection) {
  FieldService svc(sphere_bundle(), test_options());
  Client c(svc.start());
  auto bad = c.request(http::verb::post, "/frame", "{\"x\": [1, 2]");
  EXPECT_EQ(bad.result(), http::status::bad_request);
  EXPECT_EQ(json::parse(bad.body())["error"]["kind"], "format");
  auto bad2 = c.request(http::verb::post, "/frame", R"({"x": [1, 2]})");
  EXPECT_EQ(bad2.result(), http::status::bad_request);
  auto missing = c.request(http::verb::get, "/nothing", "");
  EXPECT_EQ(missing.result(), http::status::not_found);
  auto ok = c.request(http::verb::post, "/frame", R"({"v":1,"x":[0.12,0,0]})");
  EXPECT_EQ(ok.result(), http::status::ok);
}

TEST(Service, SceneCarriesCloudAndKeypoints) {
  FieldService svc(sphere_bundle(), test_options());
  Client c(svc.start());
  auto res = c.request(http::verb::get, "/scene", "");
  ASSERT_EQ(res.result(), http::status::ok);
  json j = json::parse(res.body());
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(j["points"].size(), sphere_bundle().cloud.size());
  EXPECT_EQ(j["frames"].size(), sphere_bundle().cloud.size());
  EXPECT_EQ(j["keypoints"]["sources"][0].get<std::size_t>(), sphere_bundle().keypoints.sources[0]);
  EXPECT_NEAR(vec3(j["keypoints"]["sink_positions"][0]).z(), -R, 0.01);
}

TEST(Service, BusyWhileRebuilding) {
  FieldService svc(sphere_bundle(), test_options());
  Client c(svc.start());
  ASSERT_TRUE(svc.hold_busy());
  auto res = c.request(http::verb::post, "/frame", R"({"x":[0.12,0,0]})");
  EXPECT_EQ(res.result(), http::status::service_unavailable);
  EXPECT_EQ(json::parse(res.body())["type"], "busy");
  EXPECT_FALSE(svc.rebuild(10));
  svc.release_busy();
  EXPECT_EQ(c.request(http::verb::post, "/frame", R"({"x":[0.12,0,0]})").result(), http::status::ok);

  auto acc = c.request(http::verb::post, "/rebuild", R"({"tau":10})");
  EXPECT_EQ(acc.result(), http::status::accepted);
  for (int i = 0; i < 200 && svc.busy(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  ASSERT_FALSE(svc.busy());
  EXPECT_EQ(svc.current()->bundle.tau_raw, 10);
}

TEST(Steer, StationaryWithZeroAxes) {
  FieldService svc(sphere_bundle(), test_options());
  SteerClient s(svc.start());
  json hello = s.receive();
  EXPECT_EQ(hello["type"], "state");
  Vec3 x0 = vec3(hello["x"]);
  s.send(R"({"v":1,"type":"axes","ax":0,"ay":0,"az":0,"delta_t":0.05})");
  for (int i = 0; i < 10; ++i) {
    json p = s.receive();
    ASSERT_EQ(p["type"], "pose");
    EXPECT_EQ(p["tick"], i + 1);
    EXPECT_EQ(vec3(p["x"]), x0);
  }
}

TEST(Steer, ErrorFrameKeepsSessionAndReplayIsIdentical) {
  ServiceOptions opt = test_options();
  FieldService svc(sphere_bundle(), opt);
  SteerClient s(svc.start());
  s.receive();
  std::vector<json> log = {
      json{{"v", 1}, {"ax", 1}, {"ay", 0}, {"az", 0}, {"delta_t", 0.05}},
      json{{"v", 1}, {"ax", 0.3}, {"ay", -0.8}, {"az", 0.2}, {"delta_t", 0.03}},
      json{{"v", 1}, {"ax", 2}, {"ay", 2}, {"az", 0}, {"delta_t", 0.02}},
  };
  s.send(log[0].dump());
  s.send("not json");
  s.send(R"({"v":1,"type":"axes","delta_t":-1})");
  s.send(log[1].dump());
  s.send(log[2].dump());
  std::vector<json> poses;
  int errors = 0;
  while (poses.size() < 20) {
    json m = s.receive();
    if (m["type"] == "error") {
      ++errors;
      EXPECT_EQ(m["error"]["kind"], "format");
    } else {
      ASSERT_EQ(m["type"], "pose");
      poses.push_back(m);
    }
  }
  EXPECT_EQ(errors, 2);
  auto ref = replay_commands(svc.current()->field, *opt.steer_start, log, opt.steer);
  ASSERT_EQ(ref.size(), poses.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(poses[i]["tick"].get<std::int64_t>(), ref[i].tick);
    EXPECT_EQ(vec3(poses[i]["x"]), ref[i].x);
    EXPECT_EQ(poses[i]["distance"].get<double>(), ref[i].distance);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(poses[i]["rotation"][k].get<double>(), ref[i].rotation(k));
    EXPECT_EQ(pose_to_json(ref[i]).dump(), poses[i].dump());
  }
}

TEST(Steer, ForwardAxisHoldsSurfaceDistanceOnSphere) {
  auto field = std::make_shared<const WorkspaceField>(sphere_bundle().workspace());
  // 10 s at the default speed covers 30 cm: start near the source so the sink is not passed.
  double polar = 10.0 * pi / 180;
  Vec3 start = (R + 0.01) * Vec3(std::sin(polar), 0, std::cos(polar));
  SteeringSession s(field, start);
  double d0 = s.state().distance;
  auto poses = s.apply({Vec3(1, 0, 0), 10.0});
  ASSERT_EQ(poses.size(), 300u);
  for (const auto& p : poses) EXPECT_NEAR(p.distance, d0, 0.003);
  EXPECT_LT(poses.back().x.z(), start.z());
}

TEST(Steer, ParseCommandValidation) {
  SteerConfig cfg;
  EXPECT_EQ(parse_axis_command(json{{"ax", 1}}, cfg).a, Vec3(1, 0, 0));
  EXPECT_THROW(parse_axis_command(json{{"v", 2}}, cfg), Error);
  EXPECT_THROW(parse_axis_command(json{{"ax", "x"}}, cfg), Error);
  EXPECT_THROW(parse_axis_command(json{{"delta_t", 100.0}}, cfg), Error);
  SteeringSession s(std::make_shared<const WorkspaceField>(sphere_bundle().workspace()), Vec3(0.2, 0, 0));
  EXPECT_EQ(s.ticks_for({Vec3::Zero(), 0.001}), 1);
  EXPECT_EQ(s.ticks_for({Vec3::Zero(), 1.0}), 30);
}
