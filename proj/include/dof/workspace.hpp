#pragma once

#include "dof/rotation.hpp"
#include "dof/scene.hpp"
#include "dof/surface_field.hpp"

#include <cstring>

namespace dof {

struct WosParams {
  int n_samples = 256;
  double eps_shell = 0.0;      // 0: twice the largest cloud spacing (1e-3 without clouds)
  int max_steps = 512;
  std::uint64_t rng_seed = 0;
  double escape_factor = 10.0;  // walks leaving this many scene diameters are truncated
  unsigned threads = 1;         // workers for the walks of one query
};

inline void validate(const WosParams& p) {
  require(p.n_samples >= 1, ErrorKind::parameter, "n_samples must be >= 1");
  require(p.eps_shell >= 0, ErrorKind::parameter, "eps_shell must be > 0");
  require(p.max_steps >= 1, ErrorKind::parameter, "max_steps must be >= 1");
  require(p.escape_factor > 0, ErrorKind::parameter, "escape_factor must be > 0");
}

struct WalkResult {
  ClosestHit hit;
  Vec3 end = Vec3::Zero();  // walk position when it stopped
  int steps = 0;
  bool truncated = false;
};

// Escape region of a walk; infinite radius disables it.
struct WalkBounds {
  Vec3 center = Vec3::Zero();
  double radius = std::numeric_limits<double>::infinity();
};

inline WalkResult wos_walk(const Scene& scene, const Vec3& x, double eps, int max_steps, CounterRng& rng,
                           const WalkBounds& bounds = {}) {
  WalkResult r;
  r.end = x;
  for (;;) {
    r.hit = scene.closest_point(r.end);
    if (r.hit.distance < eps) return r;
    if (r.steps >= max_steps || (r.end - bounds.center).norm() > bounds.radius) {
      r.truncated = true;
      return r;
    }
    r.end += r.hit.distance * rng.unit_vector();
    ++r.steps;
  }
}

// Frame assignment on an analytic primitive, columns (u, v, n).
struct PrimitiveFrameRule {
  enum class Kind { constant, sphere_east, sphere_meridian, axial };
  Kind kind = Kind::constant;
  Mat3 frame = Mat3::Identity();
  Vec3 axis = Vec3::UnitZ();

  static PrimitiveFrameRule constant_frame(const Mat3& r) { return {Kind::constant, r, Vec3::UnitZ()}; }
  static PrimitiveFrameRule east(const Vec3& axis = Vec3::UnitZ()) {
    return {Kind::sphere_east, Mat3::Identity(), axis.normalized()};
  }
  // u points along the meridian toward the -axis pole.
  static PrimitiveFrameRule meridian(const Vec3& axis = Vec3::UnitZ()) {
    return {Kind::sphere_meridian, Mat3::Identity(), axis.normalized()};
  }
  static PrimitiveFrameRule axial() { return {Kind::axial, Mat3::Identity(), Vec3::UnitZ()}; }
};

namespace detail {

inline Mat3 frame_from_normal(const Vec3& n, const Vec3& u_hint) {
  Vec3 u = u_hint - u_hint.dot(n) * n;
  if (u.norm() < 1e-12) u = any_perpendicular(n);
  u.normalize();
  return frame_from_columns(u, n.cross(u), n);
}

}  // namespace detail

inline Mat3 primitive_frame(const SurfacePrimitive& prim, const PrimitiveFrameRule& rule, const ClosestHit& hit,
                            const Vec3& from) {
  using K = PrimitiveFrameRule::Kind;
  if (rule.kind == K::constant) return rule.frame;
  if (const auto* s = std::get_if<Sphere>(&prim)) {
    Vec3 n = detail::radial_dir(hit.point - s->center, Vec3::UnitX());
    if (rule.kind == K::sphere_east) return detail::frame_from_normal(n, rule.axis.cross(n));
    if (rule.kind == K::sphere_meridian) return detail::frame_from_normal(n, -rule.axis);
  }
  Vec3 a, b;
  if (const auto* s = std::get_if<Segment>(&prim)) {
    a = s->a;
    b = s->b;
  } else if (const auto* c = std::get_if<Capsule>(&prim)) {
    a = c->a;
    b = c->b;
  } else {
    throw Error(ErrorKind::parameter, std::string("frame rule does not apply to a ") + kind_name(prim));
  }
  Vec3 t = (b - a).normalized();
  Vec3 axis_pt = a + hit.param * (b - a);
  Vec3 n = from - axis_pt;
  n -= n.dot(t) * t;
  n = detail::radial_dir(n, any_perpendicular(t));
  return frame_from_columns(t, n.cross(t), n);
}

// Boundary data attached to one scene surface.
struct SurfaceBoundary {
  std::vector<Mat3> frames;  // clouds: per vertex
  VecX values;               // clouds: per vertex scalar, optional
  std::vector<Vec3> gradients;  // clouds: optional value gradients for first-order interpolation
  PrimitiveFrameRule rule;   // primitives
  double value = 0.0;        // primitives
};

struct FrameQueryResult {
  Mat3 rotation = Mat3::Identity();
  Vec4 quaternion{1, 0, 0, 0};
  double mean_hit_distance = 0.0;  // mean |hit - x|
  double distance = 0.0;           // distance from x to the scene
  std::vector<std::size_t> hit_histogram;
  std::size_t walks_truncated = 0;
  double mean_steps = 0.0;
  bool hemisphere_conflict = false;  // some hit pair more than 90 degrees apart
};

struct ScalarEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t walks_truncated = 0;
  bool all_truncated = false;
  double mean_steps = 0.0;
};

class WorkspaceField {
 public:
  explicit WorkspaceField(WosParams params = {}) : params_(params) { validate(params_); }

  std::size_t add_cloud(PointCloud cloud, const SurfaceFrameField& frames, VecX values = {}) {
    require(frames.size() == cloud.size(), ErrorKind::shape, "frame field does not match cloud");
    require(values.size() == 0 || values.size() == static_cast<Eigen::Index>(cloud.size()), ErrorKind::shape,
            "boundary values do not match cloud");
    if (!cloud.mean_spacing_h) mean_spacing(cloud);
    max_h_ = std::max(max_h_, *cloud.mean_spacing_h);
    SurfaceBoundary b;
    b.frames = frames.frames;
    b.values = std::move(values);
    boundary_.push_back(std::move(b));
    std::size_t id = scene_.add_cloud(std::move(cloud));
    refresh();
    return id;
  }

  std::size_t add_primitive(const SurfacePrimitive& prim, const PrimitiveFrameRule& rule = {}, double value = 0.0) {
    SurfaceBoundary b;
    b.rule = rule;
    b.value = value;
    std::size_t id = scene_.add_primitive(prim);
    boundary_.push_back(std::move(b));
    refresh();
    return id;
  }

  void set_values(std::size_t surface, VecX values) {
    require(scene_.is_cloud(surface), ErrorKind::parameter, "per-vertex values need a cloud surface");
    require(values.size() == static_cast<Eigen::Index>(scene_.cloud(surface).size()), ErrorKind::shape,
            "boundary values do not match cloud");
    boundary_.at(surface).values = std::move(values);
  }

  void set_gradients(std::size_t surface, std::vector<Vec3> g) {
    require(scene_.is_cloud(surface), ErrorKind::parameter, "gradients need a cloud surface");
    require(g.size() == scene_.cloud(surface).size(), ErrorKind::shape, "gradients do not match cloud");
    boundary_.at(surface).gradients = std::move(g);
  }

  void set_params(const WosParams& p) {
    validate(p);
    params_ = p;
    refresh();
  }

  const Scene& scene() const { return scene_; }
  const WosParams& params() const { return params_; }
  double eps_shell() const { return eps_; }
  const WalkBounds& bounds() const { return bounds_; }
  const SurfaceBoundary& boundary(std::size_t id) const { return boundary_.at(id); }

  Mat3 boundary_frame(const WalkResult& w) const {
    const ClosestHit& h = w.hit;
    if (scene_.is_cloud(h.surface_id)) return boundary_[h.surface_id].frames[h.vertex];
    return primitive_frame(scene_.primitive(h.surface_id), boundary_[h.surface_id].rule, h, w.end);
  }

  double boundary_value(const ClosestHit& h) const {
    const SurfaceBoundary& b = boundary_[h.surface_id];
    if (!scene_.is_cloud(h.surface_id)) return b.value;
    require(b.values.size() > 0, ErrorKind::parameter,
            "surface " + std::to_string(h.surface_id) + " has no scalar boundary values");
    return b.values(static_cast<Eigen::Index>(h.vertex));
  }

  bool has_values(std::size_t id) const { return !scene_.is_cloud(id) || boundary_.at(id).values.size() > 0; }

  // Boundary value at the closest point to x, first-order corrected when gradients are known.
  double value_near(const ClosestHit& h, const Vec3& x) const {
    double v = boundary_value(h);
    if (!scene_.is_cloud(h.surface_id)) return v;
    const SurfaceBoundary& b = boundary_[h.surface_id];
    if (b.gradients.empty()) return v;
    return v + b.gradients[h.vertex].dot(x - h.point);
  }

  WalkResult walk(const Vec3& x, CounterRng& rng) const {
    return wos_walk(scene_, x, eps_, params_.max_steps, rng, bounds_);
  }

 private:
  void refresh() {
    if (scene_.empty()) return;
    eps_ = params_.eps_shell > 0 ? params_.eps_shell : (max_h_ > 0 ? 2.0 * max_h_ : 1e-3);
    auto [c, r] = scene_.bounds();
    double diameter = std::max(2.0 * r, eps_);
    bounds_ = {c, r + params_.escape_factor * diameter};
  }

  Scene scene_;
  std::vector<SurfaceBoundary> boundary_;
  WosParams params_;
  double max_h_ = 0.0;
  double eps_ = 1e-3;
  WalkBounds bounds_;
};

// Per-query stream key. Queries are identified by their coordinates, so a
// query's result does not depend on its position in a batch.
inline std::uint64_t query_key(std::uint64_t seed, const Vec3& x) {
  std::uint64_t h = seed;
  for (int i = 0; i < 3; ++i) {
    double c = x(i) == 0.0 ? 0.0 : x(i);  // fold -0 into +0
    std::uint64_t bits;
    std::memcpy(&bits, &c, sizeof bits);
    h = hash_combine(h, bits);
  }
  return h;
}

inline std::vector<WalkResult> run_walks(const WorkspaceField& field, const Vec3& x) {
  const WosParams& p = field.params();
  std::uint64_t key = query_key(p.rng_seed, x);
  std::vector<WalkResult> walks(static_cast<std::size_t>(p.n_samples));
  parallel_for(
      walks.size(),
      [&](std::size_t w) {
        CounterRng rng(hash_combine(key, w));
        walks[w] = field.walk(x, rng);
      },
      p.threads);
  return walks;
}

inline ScalarEstimate wos_scalar(const WorkspaceField& field, const Vec3& x) {
  auto walks = run_walks(field, x);
  double n = static_cast<double>(walks.size());
  double sum = 0, sum2 = 0, steps = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  ScalarEstimate e;
  for (const auto& w : walks) {
    double v = field.boundary_value(w.hit);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
    sum2 += v * v;
    steps += w.steps;
    e.walks_truncated += w.truncated;
  }
  e.value = lo == hi ? lo : sum / n;
  double var = walks.size() > 1 && lo != hi ? std::max(0.0, (sum2 - n * e.value * e.value) / (n - 1)) : 0.0;
  e.stderr_ = std::sqrt(var / n);
  e.all_truncated = e.walks_truncated == walks.size();
  e.mean_steps = steps / n;
  return e;
}

inline FrameQueryResult query_frame(const WorkspaceField& field, const Vec3& x) {
  require(x.allFinite(), ErrorKind::parameter, "query point must be finite");
  auto walks = run_walks(field, x);
  FrameQueryResult r;
  r.hit_histogram.assign(field.scene().size(), 0);
  r.distance = field.scene().closest_point(x).distance;
  std::vector<Mat3> frames(walks.size());
  double steps = 0, dist = 0;
  for (std::size_t w = 0; w < walks.size(); ++w) {
    frames[w] = field.boundary_frame(walks[w]);
    r.hit_histogram[walks[w].hit.surface_id]++;
    r.walks_truncated += walks[w].truncated;
    steps += walks[w].steps;
    dist += (walks[w].hit.point - x).norm();
  }
  double n = static_cast<double>(walks.size());
  r.mean_steps = steps / n;
  r.mean_hit_distance = dist / n;
  if (std::all_of(frames.begin(), frames.end(), [&](const Mat3& f) { return f == frames[0]; })) {
    r.rotation = frames[0];
    r.quaternion = quat_from_matrix(frames[0]);
    return r;
  }
  std::vector<Vec4> qs(frames.size());
  for (std::size_t w = 0; w < frames.size(); ++w) {
    qs[w] = quat_from_matrix(frames[w]);
    if (qs[w].dot(qs[0]) < 0) qs[w] = -qs[w];
  }
  // |q_a . q_b| < cos(45 deg) means the rotations differ by more than 90 degrees.
  const double c45 = std::cos(pi / 4);
  for (std::size_t a = 0; a < qs.size() && !r.hemisphere_conflict; ++a)
    for (std::size_t b = a + 1; b < qs.size(); ++b)
      if (std::abs(qs[a].dot(qs[b])) < c45) {
        r.hemisphere_conflict = true;
        break;
      }
  try {
    r.quaternion = average_quaternions(qs);
  } catch (const Error& e) {
    std::ostringstream os;
    os << e.what() << " at query (" << x.x() << ", " << x.y() << ", " << x.z() << ")";
    throw Error(e.kind(), os.str());
  }
  r.rotation = matrix_from_quat(r.quaternion);
  return r;
}

inline std::vector<FrameQueryResult> query_frames_batch(const WorkspaceField& field, const std::vector<Vec3>& xs,
                                                        unsigned threads = 0) {
  std::vector<FrameQueryResult> out(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { out[i] = query_frame(field, xs[i]); }, threads);
  return out;
}

}  // namespace dof
