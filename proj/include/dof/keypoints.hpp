#pragma once

#include "dof/surface_field.hpp"

namespace dof {

struct AntipodalOptions {
  double tau_raw = 1000.0;
  std::optional<std::size_t> start;  // default: vertex nearest the centroid
  double confidence_gap = 0.125;     // log-domain (median - end) / (max - end)
};

struct AntipodalResult {
  KeypointSet keypoints;
  std::size_t start = 0;
  double gap = 0.0;
};

namespace detail {

inline std::size_t argmin_lowest(const VecX& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) < v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

// Position of the end value between the field's peak and median on a log scale.
inline double log_gap(const VecX& u) {
  std::vector<double> v(u.data(), u.data() + u.size());
  std::sort(v.begin(), v.end());
  double lo = v.front(), hi = v.back(), med = v[v.size() / 2];
  if (!(lo > 0) || !(hi > lo)) return 0.0;
  return (std::log(med) - std::log(lo)) / (std::log(hi) - std::log(lo));
}

}  // namespace detail

inline AntipodalResult extract_antipodal(SurfaceDiffuser& diff, const PointCloud& cloud,
                                         const AntipodalOptions& opt = {}) {
  std::size_t n = cloud.size();
  require(static_cast<std::size_t>(diff.laplacian().size()) == n, ErrorKind::shape, "Laplacian does not match cloud");
  AntipodalResult r;
  r.start = opt.start ? *opt.start : KdTree(cloud.points).nearest(cloud.centroid()).index;
  require(r.start < n, ErrorKind::parameter, "start vertex out of range");
  auto from = [&](std::size_t v) {
    VecX e = VecX::Zero(static_cast<Eigen::Index>(n));
    e(static_cast<Eigen::Index>(v)) = 1.0;
    return VecX(diff.diffuse(e, opt.tau_raw));
  };
  std::size_t first = detail::argmin_lowest(from(r.start));
  VecX second_field = from(first);
  std::size_t second = detail::argmin_lowest(second_field);
  require(first != second, ErrorKind::degenerate, "antipodal extraction found a single end");
  r.keypoints.sources = {first};
  r.keypoints.sinks = {second};
  r.gap = detail::log_gap(second_field);
  r.keypoints.low_confidence = r.gap < opt.confidence_gap;
  return r;
}

inline AntipodalResult extract_antipodal(const PointCloud& cloud, const LaplacianPair& lap,
                                         const AntipodalOptions& opt = {}) {
  SurfaceDiffuser d(std::shared_ptr<const LaplacianPair>(&lap, [](const LaplacianPair*) {}));
  return extract_antipodal(d, cloud, opt);
}

// Largest angular gap between consecutive neighbour directions in the tangent plane.
inline double max_angular_gap(const PointCloud& cloud, const KdTree& tree, std::size_t i, int k) {
  const Vec3& p = cloud.points[i];
  const Vec3& nrm = cloud.normals[i];
  Vec3 e1 = any_perpendicular(nrm), e2 = nrm.cross(e1);
  std::vector<double> ang;
  for (const auto& nb : tree.knn(p, static_cast<std::size_t>(k) + 1)) {
    if (nb.index == i) continue;
    Vec3 d = cloud.points[nb.index] - p;
    double x = d.dot(e1), y = d.dot(e2);
    if (x == 0 && y == 0) continue;
    ang.push_back(std::atan2(y, x));
  }
  if (ang.size() < 2) return 2 * pi;
  std::sort(ang.begin(), ang.end());
  double gap = ang.front() + 2 * pi - ang.back();
  for (std::size_t j = 1; j < ang.size(); ++j) gap = std::max(gap, ang[j] - ang[j - 1]);
  return gap;
}

inline KeypointSet extract_boundary(const PointCloud& cloud, int k = 16, double gap_angle = pi / 2,
                                    unsigned threads = 0) {
  require(cloud.has_normals(), ErrorKind::parameter, "boundary extraction needs normals");
  require(k >= 2, ErrorKind::parameter, "boundary extraction needs k >= 2");
  KdTree tree(cloud.points);
  std::vector<char> flag(cloud.size(), 0);
  parallel_for(
      cloud.size(), [&](std::size_t i) { flag[i] = max_angular_gap(cloud, tree, i, k) > gap_angle; }, threads);
  KeypointSet kp;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (flag[i]) kp.sources.push_back(i);
  return kp;
}

}  // namespace dof
