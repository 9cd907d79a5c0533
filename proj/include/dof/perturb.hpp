#pragma once

#include "dof/kdtree.hpp"
#include "dof/point_cloud.hpp"
#include "dof/surface_field.hpp"

#include <random>

namespace dof {

// Anisotropic scale, then quadratic bend about x, y, z, then twist about x, y, z.
struct DeformParams {
  Vec3 scale = Vec3::Ones();
  Vec3 bend = Vec3::Zero();   // 1/m
  Vec3 twist = Vec3::Zero();  // rad/m
  std::uint64_t seed = 0;

  static DeformParams sample(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> s(0.6, 1.4), c(-3.0, 3.0);
    DeformParams p;
    p.seed = seed;
    for (int i = 0; i < 3; ++i) p.scale(i) = s(rng);
    for (int i = 0; i < 3; ++i) p.bend(i) = c(rng);
    for (int i = 0; i < 3; ++i) p.twist(i) = c(rng);
    return p;
  }
};

// Deformation of a point given in the object's centroid frame.
inline Vec3 deform_point(const Vec3& q, const DeformParams& p) {
  Vec3 x = q.cwiseProduct(p.scale);
  for (int j = 0; j < 3; ++j) {
    double b = p.bend(j) * x(j) * x(j);
    for (int i = 0; i < 3; ++i)
      if (i != j) x(i) += b;
  }
  for (int j = 0; j < 3; ++j) {
    double th = p.twist(j) * x(j);
    double c = std::cos(th), s = std::sin(th);
    int a = (j + 1) % 3, b = (j + 2) % 3;
    double xa = x(a), xb = x(b);
    x(a) = c * xa - s * xb;
    x(b) = s * xa + c * xb;
  }
  return x;
}

struct Deformed {
  PointCloud cloud;
  DeformParams params;
  std::vector<std::size_t> vertex_map;  // output vertex i comes from input vertex vertex_map[i]
};

inline Deformed apply_deform(const PointCloud& cloud, const DeformParams& params, unsigned threads = 0) {
  Deformed out;
  out.params = params;
  out.cloud = cloud;
  out.cloud.mean_spacing_h.reset();
  out.vertex_map.resize(cloud.size());
  std::iota(out.vertex_map.begin(), out.vertex_map.end(), std::size_t{0});
  Vec3 c = cloud.centroid();
  double e = 1e-6;
  parallel_for(
      cloud.size(),
      [&](std::size_t i) {
        Vec3 q = cloud.points[i] - c;
        // Written as a displacement so that neutral parameters reproduce the input bitwise.
        out.cloud.points[i] = cloud.points[i] + (deform_point(q, params) - q);
        if (!cloud.has_normals()) return;
        Mat3 j;
        for (int a = 0; a < 3; ++a) {
          Vec3 d = Vec3::Zero();
          d(a) = e;
          j.col(a) = (deform_point(q + d, params) - deform_point(q - d, params)) / (2 * e);
        }
        Vec3 n = j.inverse().transpose() * cloud.normals[i];
        out.cloud.normals[i] = n.normalized();
      },
      threads);
  if (params.scale == Vec3::Ones() && params.bend.isZero(0) && params.twist.isZero(0)) out.cloud.normals = cloud.normals;
  return out;
}

inline Deformed random_deform(const PointCloud& cloud, std::uint64_t seed) {
  return apply_deform(cloud, DeformParams::sample(seed));
}

struct NoisyCloud {
  PointCloud cloud;
  KeypointSet keypoints;
  std::vector<std::size_t> kept;  // new index -> original index
  std::vector<Vec3> hole_centers;
};

struct TopologicalOptions {
  int holes = 10;
  double hole_radius = 0.005;
  double max_reproject = 0.05;
};

namespace detail {

inline PointCloud subset(const PointCloud& c, const std::vector<std::size_t>& idx) {
  PointCloud out;
  out.points.reserve(idx.size());
  for (auto i : idx) {
    out.points.push_back(c.points[i]);
    if (c.has_normals()) out.normals.push_back(c.normals[i]);
  }
  return out;
}

inline Vec3 gaussian_vec(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  double x = g(rng), y = g(rng), z = g(rng);
  return {x, y, z};
}

}  // namespace detail

// Maps keypoints of `original` onto the surviving subset, nearest survivor for removed ones.
inline KeypointSet reproject_keypoints(const KeypointSet& kp, const PointCloud& original,
                                       const std::vector<std::size_t>& kept, const PointCloud& survivors,
                                       double max_distance) {
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> inverse(original.size(), none);
  for (std::size_t i = 0; i < kept.size(); ++i) inverse[kept[i]] = i;
  KdTree tree(survivors.points);
  auto map = [&](std::size_t v) {
    if (inverse[v] != none) return inverse[v];
    Neighbor nb = tree.nearest(original.points[v]);
    if (std::sqrt(nb.dist2) > max_distance)
      throw Error(ErrorKind::keypoint_loss, "keypoint " + std::to_string(v) + " has no surviving vertex within " +
                                                std::to_string(max_distance) + " m");
    return nb.index;
  };
  KeypointSet out = kp;
  for (auto& s : out.sources) s = map(s);
  for (auto& s : out.sinks) s = map(s);
  for (auto s : out.sources)
    if (std::count(out.sinks.begin(), out.sinks.end(), s))
      throw Error(ErrorKind::keypoint_loss, "source and sink collapsed onto vertex " + std::to_string(s));
  return out;
}

// Removes the half on one side of a random plane through the centroid, then carves holes.
inline NoisyCloud topological_noise(const PointCloud& cloud, const KeypointSet& kp, std::uint64_t seed,
                                    const TopologicalOptions& opt = {}) {
  require(cloud.size() >= 100, ErrorKind::size, "topological noise needs at least 100 points");
  std::mt19937_64 rng(hash_combine(seed, 0x7090));
  Vec3 normal = detail::gaussian_vec(rng, 1.0).normalized();
  Vec3 c = cloud.centroid();
  std::vector<char> alive(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) alive[i] = (cloud.points[i] - c).dot(normal) <= 0;
  KdTree tree(cloud.points);
  NoisyCloud out;
  for (int h = 0; h < opt.holes; ++h) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (alive[i]) live.push_back(i);
    require(!live.empty(), ErrorKind::size, "hole carving removed every point");
    std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
    Vec3 centre = cloud.points[live[pick(rng)]];
    out.hole_centers.push_back(centre);
    for (const auto& nb : tree.radius(centre, opt.hole_radius)) alive[nb.index] = 0;
  }
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (alive[i]) out.kept.push_back(i);
  require(out.kept.size() >= 4, ErrorKind::size, "too few points survive topological noise");
  out.cloud = detail::subset(cloud, out.kept);
  out.keypoints = reproject_keypoints(kp, cloud, out.kept, out.cloud, opt.max_reproject);
  return out;
}

// I.i.d. Gaussian offsets; normals re-estimated and signed to agree with the originals.
inline PointCloud geometric_noise(const PointCloud& cloud, double sigma = 0.003, std::uint64_t seed = 0, int k = 16) {
  require(sigma >= 0, ErrorKind::parameter, "sigma must be non-negative");
  if (sigma == 0) return cloud;
  std::mt19937_64 rng(hash_combine(seed, 0x6e01));
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(p + detail::gaussian_vec(rng, sigma));
  if (!cloud.has_normals()) return out;
  out = estimate_normals(out, k).cloud;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.normals[i].dot(cloud.normals[i]) < 0) out.normals[i] = -out.normals[i];
  return out;
}

inline KeypointSet keypoint_noise(const KeypointSet& kp, const PointCloud& cloud, double sigma = 0.020,
                                  std::uint64_t seed = 0) {
  require(sigma >= 0, ErrorKind::parameter, "sigma must be non-negative");
  if (sigma == 0) return kp;
  std::mt19937_64 rng(hash_combine(seed, 0x4b01));
  KdTree tree(cloud.points);
  KeypointSet out = kp;
  auto move = [&](std::size_t v) { return tree.nearest(cloud.points[v] + detail::gaussian_vec(rng, sigma)).index; };
  for (auto& s : out.sources) s = move(s);
  for (auto& s : out.sinks) s = move(s);
  for (auto s : out.sources)
    if (std::count(out.sinks.begin(), out.sinks.end(), s))
      throw Error(ErrorKind::keypoint_loss, "source and sink collapsed onto vertex " + std::to_string(s));
  return out;
}

}  // namespace dof
