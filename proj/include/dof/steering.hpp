#pragma once

#include "dof/io.hpp"

namespace dof {

struct SteerConfig {
  double rate_hz = 30.0;
  double speed = 0.03;          // m/s at unit axis input; step per tick is speed / rate
  double max_command_s = 10.0;  // longest delta_t accepted in one command

  double step() const { return speed / rate_hz; }
};

inline void validate(const SteerConfig& c) {
  require(c.rate_hz > 0 && c.speed > 0 && c.max_command_s > 0, ErrorKind::parameter,
          "steering rate, speed and command length must be positive");
}

struct AxisCommand {
  Vec3 a = Vec3::Zero();
  double delta_t = 0.0;
};

struct PoseUpdate {
  std::int64_t tick = 0;
  Vec3 x = Vec3::Zero();
  Vec4 rotation{1, 0, 0, 0};
  double distance = 0.0;
  Vec3 a = Vec3::Zero();
};

// {"v":1,"type":"axes","ax":..,"ay":..,"az":..,"delta_t":..}; axes missing are zero.
inline AxisCommand parse_axis_command(const json& j, const SteerConfig& cfg) {
  require(j.is_object(), ErrorKind::format, "command must be a JSON object");
  require(detail::get_or(j, "v", schema_version) == schema_version, ErrorKind::format, "unsupported message version");
  AxisCommand c;
  c.a = Vec3(detail::get_or(j, "ax", 0.0), detail::get_or(j, "ay", 0.0), detail::get_or(j, "az", 0.0));
  c.delta_t = detail::get_or(j, "delta_t", 1.0 / cfg.rate_hz);
  require(c.a.allFinite(), ErrorKind::format, "axes must be finite");
  require(c.delta_t > 0 && c.delta_t <= cfg.max_command_s, ErrorKind::format, "delta_t out of range");
  return c;
}

inline json pose_to_json(const PoseUpdate& p) {
  return {{"v", schema_version},
          {"type", "pose"},
          {"tick", p.tick},
          {"x", detail::array_of(p.x)},
          {"rotation", detail::array_of(p.rotation)},
          {"distance", p.distance},
          {"a", detail::array_of(p.a)}};
}

inline json error_message(const std::string& kind, const std::string& msg) {
  return {{"v", schema_version}, {"type", "error"}, {"error", {{"kind", kind}, {"message", msg}}}};
}

// Server-side integration of axis commands: each tick x <- x + step * F(x) * a with
// |a| clamped to 1. A command lasts round(delta_t * rate) ticks (at least one), so
// the pose stream depends only on the start and the command sequence.
class SteeringSession {
 public:
  SteeringSession(std::shared_ptr<const WorkspaceField> field, const Vec3& start, SteerConfig cfg = {})
      : field_(std::move(field)), cfg_(cfg), x_(start) {
    validate(cfg_);
    require(field_ != nullptr, ErrorKind::parameter, "steering needs a field");
    require(start.allFinite(), ErrorKind::parameter, "start must be finite");
    refresh();
  }

  std::int64_t ticks_for(const AxisCommand& c) const {
    return std::max<std::int64_t>(1, std::llround(c.delta_t * cfg_.rate_hz));
  }

  PoseUpdate state() const {
    return {tick_, x_, q_, dist_, Vec3::Zero()};
  }

  PoseUpdate tick(const Vec3& axes) {
    Vec3 a = axes;
    if (a.norm() > 1.0) a.normalize();
    x_ = step_local(x_, frame_, a, cfg_.step());
    refresh();
    ++tick_;
    return {tick_, x_, q_, dist_, a};
  }

  std::vector<PoseUpdate> apply(const AxisCommand& c) {
    std::vector<PoseUpdate> out;
    for (std::int64_t i = 0, n = ticks_for(c); i < n; ++i) out.push_back(tick(c.a));
    return out;
  }

  void set_field(std::shared_ptr<const WorkspaceField> f) {
    field_ = std::move(f);
    refresh();
  }

  const Vec3& position() const { return x_; }
  const SteerConfig& config() const { return cfg_; }

 private:
  void refresh() {
    FrameQueryResult r = query_frame(*field_, x_);
    frame_ = r.rotation;
    q_ = r.quaternion;
    dist_ = r.distance;
  }

  std::shared_ptr<const WorkspaceField> field_;
  SteerConfig cfg_;
  Vec3 x_;
  Mat3 frame_ = Mat3::Identity();
  Vec4 q_{1, 0, 0, 0};
  double dist_ = 0.0;
  std::int64_t tick_ = 0;
};

// Offline replay of a recorded command log (one JSON command per line).
inline std::vector<PoseUpdate> replay_commands(std::shared_ptr<const WorkspaceField> field, const Vec3& start,
                                               const std::vector<json>& log, const SteerConfig& cfg = {}) {
  SteeringSession s(std::move(field), start, cfg);
  std::vector<PoseUpdate> out;
  for (const auto& j : log) {
    auto u = s.apply(parse_axis_command(j, cfg));
    out.insert(out.end(), u.begin(), u.end());
  }
  return out;
}

inline std::vector<json> read_command_log(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<json> log;
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) log.push_back(parse_json(line));
  return log;
}

}  // namespace dof
