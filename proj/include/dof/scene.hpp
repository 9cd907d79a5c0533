#pragma once

#include "dof/kdtree.hpp"
#include "dof/point_cloud.hpp"

#include <memory>
#include <variant>

namespace dof {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};
struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};
struct Segment {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitX();
};
struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitX();
  double radius = 0.1;
};

using SurfacePrimitive = std::variant<Sphere, Plane, Segment, Capsule>;

inline void validate(const SurfacePrimitive& p) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          require(s.radius > 0 && s.center.allFinite(), ErrorKind::parameter, "sphere radius must be positive");
        } else if constexpr (std::is_same_v<T, Plane>) {
          require(std::abs(s.normal.norm() - 1.0) < 1e-9, ErrorKind::parameter, "plane normal must be unit length");
        } else if constexpr (std::is_same_v<T, Segment>) {
          require((s.b - s.a).norm() > 0, ErrorKind::parameter, "segment endpoints must be distinct");
        } else {
          require((s.b - s.a).norm() > 0, ErrorKind::parameter, "capsule endpoints must be distinct");
          require(s.radius > 0, ErrorKind::parameter, "capsule radius must be positive");
        }
      },
      p);
}

inline const char* kind_name(const SurfacePrimitive& p) {
  static constexpr const char* names[] = {"sphere", "plane", "segment", "capsule"};
  return names[p.index()];
}

struct ClosestHit {
  Vec3 point = Vec3::Zero();
  std::size_t surface_id = 0;
  double distance = std::numeric_limits<double>::infinity();
  std::size_t vertex = npos;  // cloud hits
  double param = 0.0;         // primitive hits: segment/capsule axis parameter
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

namespace detail {

inline double segment_param(const Vec3& a, const Vec3& b, const Vec3& x) {
  Vec3 d = b - a;
  return std::clamp((x - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
}

// Radial projection used by sphere and capsule; a point exactly on the
// centre/axis picks a fixed direction.
inline Vec3 radial_dir(const Vec3& v, const Vec3& fallback) {
  double n = v.norm();
  return n > 0 ? Vec3(v / n) : fallback;
}

}  // namespace detail

inline ClosestHit closest_on_primitive(const SurfacePrimitive& prim, const Vec3& x) {
  ClosestHit h;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          Vec3 d = detail::radial_dir(x - s.center, Vec3::UnitX());
          h.point = s.center + s.radius * d;
        } else if constexpr (std::is_same_v<T, Plane>) {
          h.point = x - (x - s.point).dot(s.normal) * s.normal;
        } else if constexpr (std::is_same_v<T, Segment>) {
          h.param = detail::segment_param(s.a, s.b, x);
          h.point = s.a + h.param * (s.b - s.a);
        } else {
          h.param = detail::segment_param(s.a, s.b, x);
          Vec3 axis_pt = s.a + h.param * (s.b - s.a);
          Vec3 d = detail::radial_dir(x - axis_pt, any_perpendicular((s.b - s.a).normalized()));
          h.point = axis_pt + s.radius * d;
        }
      },
      prim);
  h.distance = (x - h.point).norm();
  // A line has zero thickness; keep distances strictly positive there.
  if (std::holds_alternative<Segment>(prim)) h.distance = std::max(h.distance, 1e-9);
  return h;
}

struct CloudSurface {
  PointCloud cloud;
  std::shared_ptr<const KdTree> tree;
};

using SceneSurface = std::variant<CloudSurface, SurfacePrimitive>;

// Ordered collection of boundary surfaces; surface_id is the insertion index.
class Scene {
 public:
  std::size_t add_cloud(PointCloud cloud) {
    require(cloud.size() >= 1, ErrorKind::size, "empty cloud in scene");
    validate(cloud);
    auto tree = std::make_shared<const KdTree>(cloud.points);
    surfaces_.emplace_back(CloudSurface{std::move(cloud), std::move(tree)});
    return surfaces_.size() - 1;
  }
  std::size_t add_primitive(const SurfacePrimitive& p) {
    validate(p);
    surfaces_.emplace_back(p);
    return surfaces_.size() - 1;
  }

  std::size_t size() const { return surfaces_.size(); }
  bool empty() const { return surfaces_.empty(); }
  const SceneSurface& surface(std::size_t id) const { return surfaces_.at(id); }
  bool is_cloud(std::size_t id) const { return std::holds_alternative<CloudSurface>(surfaces_.at(id)); }
  const PointCloud& cloud(std::size_t id) const { return std::get<CloudSurface>(surfaces_.at(id)).cloud; }
  const KdTree& tree(std::size_t id) const { return *std::get<CloudSurface>(surfaces_.at(id)).tree; }
  const SurfacePrimitive& primitive(std::size_t id) const { return std::get<SurfacePrimitive>(surfaces_.at(id)); }

  ClosestHit closest_point(const Vec3& x) const {
    require(!surfaces_.empty(), ErrorKind::parameter, "closest_point on an empty scene");
    ClosestHit best;
    for (std::size_t id = 0; id < surfaces_.size(); ++id) {
      ClosestHit h;
      if (const auto* cs = std::get_if<CloudSurface>(&surfaces_[id])) {
        Neighbor nb = cs->tree->nearest(x);
        h.point = cs->cloud.points[nb.index];
        h.vertex = nb.index;
        h.distance = (x - h.point).norm();
      } else {
        h = closest_on_primitive(std::get<SurfacePrimitive>(surfaces_[id]), x);
      }
      h.surface_id = id;
      if (h.distance < best.distance) best = h;
    }
    return best;
  }

  // Bounding sphere of clouds and bounded primitives (planes contribute their anchor).
  std::pair<Vec3, double> bounds() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    auto grow = [&](const Vec3& p, double r) {
      lo = lo.cwiseMin(p - Vec3::Constant(r));
      hi = hi.cwiseMax(p + Vec3::Constant(r));
    };
    for (const auto& s : surfaces_) {
      if (const auto* cs = std::get_if<CloudSurface>(&s)) {
        for (const auto& p : cs->cloud.points) grow(p, 0);
      } else {
        std::visit(
            [&](const auto& pr) {
              using T = std::decay_t<decltype(pr)>;
              if constexpr (std::is_same_v<T, Sphere>) grow(pr.center, pr.radius);
              else if constexpr (std::is_same_v<T, Plane>) grow(pr.point, 0);
              else if constexpr (std::is_same_v<T, Segment>) {
                grow(pr.a, 0);
                grow(pr.b, 0);
              } else {
                grow(pr.a, pr.radius);
                grow(pr.b, pr.radius);
              }
            },
            std::get<SurfacePrimitive>(s));
      }
    }
    if (!lo.allFinite()) return {Vec3::Zero(), 1.0};
    Vec3 c = 0.5 * (lo + hi);
    return {c, std::max(0.5 * (hi - lo).norm(), 1e-6)};
  }

 private:
  std::vector<SceneSurface> surfaces_;
};

}  // namespace dof
