#pragma once

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dof/actions.hpp"
#include "dof/pipeline.hpp"

namespace dof {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double read_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  require(r.ec == std::errc() && r.ptr == s.data() + s.size(), ErrorKind::format, "bad number '" + std::string(s) + "'");
  return x;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << text;
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

inline json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("malformed JSON: ") + e.what());
  }
}

namespace detail {

inline Vec3 vec3_of(const json& j) {
  require(j.is_array() && j.size() == 3, ErrorKind::format, "expected a 3-vector");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    require(j[i].is_number(), ErrorKind::format, "vector entries must be numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

inline Vec4 vec4_of(const json& j) {
  require(j.is_array() && j.size() == 4, ErrorKind::format, "expected a quaternion [w, x, y, z]");
  Vec4 v;
  for (int i = 0; i < 4; ++i) {
    require(j[i].is_number(), ErrorKind::format, "quaternion entries must be numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

template <class V>
json array_of(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::format, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Keypoints

inline json keypoints_to_json(const KeypointSet& kp) {
  json j{{"v", schema_version}, {"sources", kp.sources}, {"sinks", kp.sinks}};
  if (!kp.directions.empty()) {
    j["directions"] = json::array();
    for (const auto& d : kp.directions) j["directions"].push_back(detail::array_of(d));
  }
  if (!kp.orientations.empty()) {
    j["orientations"] = json::array();
    for (const auto& q : kp.orientations) j["orientations"].push_back(detail::array_of(q));
  }
  if (kp.low_confidence) j["low_confidence"] = true;
  return j;
}

inline KeypointSet keypoints_from_json(const json& j) {
  require(j.is_object(), ErrorKind::format, "keypoints must be a JSON object");
  KeypointSet kp;
  auto indices = [&](const char* key) {
    std::vector<std::size_t> out;
    if (!j.contains(key)) return out;
    const json& a = j.at(key);
    require(a.is_array(), ErrorKind::format, std::string("'") + key + "' must be an array");
    for (const auto& e : a) {
      require(e.is_number_unsigned(), ErrorKind::format, "keypoint indices must be non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  };
  kp.sources = indices("sources");
  kp.sinks = indices("sinks");
  require(!kp.sources.empty(), ErrorKind::format, "keypoints need at least one source");
  if (j.contains("directions"))
    for (const auto& d : j.at("directions")) kp.directions.push_back(detail::vec3_of(d));
  if (j.contains("orientations"))
    for (const auto& q : j.at("orientations")) kp.orientations.push_back(detail::vec4_of(q));
  kp.low_confidence = detail::get_or(j, "low_confidence", false);
  return kp;
}

inline KeypointSet load_keypoints(const std::string& path) { return keypoints_from_json(parse_json(read_file(path))); }

inline void save_keypoints(const std::string& path, const KeypointSet& kp) {
  write_file(path, keypoints_to_json(kp).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Trajectories

inline constexpr const char* trajectory_header = "step,x,y,z,qw,qx,qy,qz,ax,ay,az,phase,dist_surface,field_value";

inline void write_trajectory_csv(std::ostream& out, const Trajectory& t) {
  out << trajectory_header << "\n";
  for (const auto& s : t.samples) {
    Vec4 q = quat_from_matrix(s.frame);
    out << s.step;
    for (int i = 0; i < 3; ++i) out << ',' << format_double(s.x(i));
    for (int i = 0; i < 4; ++i) out << ',' << format_double(q(i));
    for (int i = 0; i < 3; ++i) out << ',' << format_double(s.a(i));
    out << ',' << phase_name(s.phase) << ',' << format_double(s.dist_surface) << ',' << format_double(s.field_value)
        << "\n";
  }
}

inline Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::format, "empty trajectory file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == trajectory_header, ErrorKind::format, "unexpected trajectory header");
  Trajectory t;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
      f.push_back(rest.substr(0, pos));
    f.push_back(rest);
    require(f.size() == 14, ErrorKind::format, "row " + std::to_string(row) + ": expected 14 columns");
    TrajectorySample s;
    s.step = static_cast<int>(read_double(f[0]));
    s.x = Vec3(read_double(f[1]), read_double(f[2]), read_double(f[3]));
    s.frame = matrix_from_quat(Vec4(read_double(f[4]), read_double(f[5]), read_double(f[6]), read_double(f[7])));
    s.a = Vec3(read_double(f[8]), read_double(f[9]), read_double(f[10]));
    s.phase = parse_phase(std::string(f[11]));
    s.dist_surface = read_double(f[12]);
    s.field_value = read_double(f[13]);
    t.samples.push_back(s);
  }
  return t;
}

inline json trajectory_to_json(const Trajectory& t) {
  json samples = json::array();
  for (const auto& s : t.samples) {
    json js{{"step", s.step},
            {"x", detail::array_of(s.x)},
            {"rotation", detail::array_of(quat_from_matrix(s.frame))},
            {"a", detail::array_of(s.a)},
            {"phase", phase_name(s.phase)},
            {"dist_surface", s.dist_surface}};
    if (std::isfinite(s.field_value)) js["field_value"] = s.field_value;
    samples.push_back(std::move(js));
  }
  json j{{"v", schema_version}, {"samples", std::move(samples)}};
  if (t.error) j["error"] = {{"kind", to_string(t.error_kind)}, {"message", *t.error}};
  return j;
}

inline void save_trajectory(const std::string& path, const Trajectory& t) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    write_file(path, trajectory_to_json(t).dump(2) + "\n");
    return;
  }
  std::ostringstream ss;
  write_trajectory_csv(ss, t);
  write_file(path, ss.str());
}

inline Trajectory load_trajectory_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_trajectory_csv(in);
}

// ---------------------------------------------------------------------------
// Built object fields: cloud, keypoints, per-vertex frames, values and gradients.

struct FieldBundle {
  PointCloud cloud;
  KeypointSet keypoints;
  double tau_raw = 0.0;
  SurfaceFrameField frames;
  VecX values;
  std::vector<Vec3> gradients;

  WorkspaceField workspace(const WosParams& p = {}) const {
    WorkspaceField f(p);
    std::size_t id = f.add_cloud(cloud, frames, values);
    if (!gradients.empty()) f.set_gradients(id, gradients);
    return f;
  }
  Vec3 source_position() const { return cloud.points.at(keypoints.sources.at(0)); }
  Vec3 sink_position() const {
    return keypoints.sinks.empty() ? source_position() : cloud.points.at(keypoints.sinks.at(0));
  }
};

inline FieldBundle bundle_of(const ObjectField& o) {
  FieldBundle b{o.cloud, o.keypoints, o.tau_raw, o.surface.frames, o.surface.normalized, {}};
  b.gradients = o.field.boundary(0).gradients;
  return b;
}

inline json bundle_to_json(const FieldBundle& b) {
  json pts = json::array(), nrm = json::array(), fr = json::array(), gr = json::array();
  for (const auto& p : b.cloud.points) pts.push_back(detail::array_of(p));
  for (const auto& n : b.cloud.normals) nrm.push_back(detail::array_of(n));
  for (const auto& f : b.frames.frames) fr.push_back(detail::array_of(quat_from_matrix(f)));
  for (const auto& g : b.gradients) gr.push_back(detail::array_of(g));
  return {{"v", schema_version},       {"tau", b.tau_raw},   {"points", std::move(pts)},
          {"normals", std::move(nrm)}, {"keypoints", keypoints_to_json(b.keypoints)},
          {"frames", std::move(fr)},   {"values", detail::array_of(b.values)},
          {"degenerate", b.frames.degenerate}, {"gradients", std::move(gr)}};
}

inline FieldBundle bundle_from_json(const json& j) {
  require(j.is_object() && j.contains("points") && j.contains("frames"), ErrorKind::format,
          "field file needs points and frames");
  require(detail::get_or(j, "v", 0) == schema_version, ErrorKind::format, "unsupported field file version");
  FieldBundle b;
  b.tau_raw = detail::get_or(j, "tau", 0.0);
  for (const auto& p : j.at("points")) b.cloud.points.push_back(detail::vec3_of(p));
  if (j.contains("normals"))
    for (const auto& n : j.at("normals")) b.cloud.normals.push_back(detail::vec3_of(n));
  for (const auto& q : j.at("frames")) b.frames.frames.push_back(matrix_from_quat(detail::vec4_of(q)));
  b.frames.degenerate = detail::get_or(j, "degenerate", std::vector<char>(b.frames.frames.size(), 0));
  if (j.contains("values")) {
    auto v = j.at("values").get<std::vector<double>>();
    b.values = Eigen::Map<VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (j.contains("gradients"))
    for (const auto& g : j.at("gradients")) b.gradients.push_back(detail::vec3_of(g));
  if (j.contains("keypoints")) b.keypoints = keypoints_from_json(j.at("keypoints"));
  validate(b.cloud);
  require(b.frames.size() == b.cloud.size(), ErrorKind::format, "frame count does not match points");
  validate(b.keypoints, b.cloud.size());
  return b;
}

inline void save_field(const std::string& path, const FieldBundle& b) { write_file(path, bundle_to_json(b).dump()); }
inline FieldBundle load_field(const std::string& path) { return bundle_from_json(parse_json(read_file(path))); }

// Per-vertex dump: position, normalized value and frame quaternion.
inline void write_field_csv(std::ostream& out, const FieldBundle& b) {
  out << "vertex,x,y,z,value,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < b.cloud.size(); ++i) {
    Vec4 q = quat_from_matrix(b.frames.frames[i]);
    out << i;
    for (int k = 0; k < 3; ++k) out << ',' << format_double(b.cloud.points[i](k));
    out << ',' << format_double(b.values.size() ? b.values(static_cast<Eigen::Index>(i)) : 0.0);
    for (int k = 0; k < 4; ++k) out << ',' << format_double(q(k));
    out << "\n";
  }
}

}  // namespace dof
