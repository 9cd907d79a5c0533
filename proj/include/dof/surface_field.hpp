#pragma once

#include "dof/kdtree.hpp"
#include "dof/laplacian.hpp"
#include "dof/rotation.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace dof {

// Keypoint vertices. Per-keypoint data (directions, orientations) is indexed
// in the order of all(): sources first, then sinks.
struct KeypointSet {
  std::vector<std::size_t> sources;
  std::vector<std::size_t> sinks;
  std::vector<Vec3> directions;
  std::vector<Vec4> orientations;
  bool low_confidence = false;

  std::vector<std::size_t> all() const {
    std::vector<std::size_t> v = sources;
    v.insert(v.end(), sinks.begin(), sinks.end());
    return v;
  }
  std::size_t count() const { return sources.size() + sinks.size(); }
};

inline void validate(const KeypointSet& kp, std::size_t n) {
  for (auto i : kp.all()) require(i < n, ErrorKind::parameter, "keypoint index " + std::to_string(i) + " out of range");
  for (auto s : kp.sources)
    require(std::find(kp.sinks.begin(), kp.sinks.end(), s) == kp.sinks.end(), ErrorKind::parameter,
            "vertex " + std::to_string(s) + " is both source and sink");
  if (!kp.directions.empty()) {
    require(kp.directions.size() == kp.count(), ErrorKind::shape, "one direction per keypoint required");
    for (const auto& d : kp.directions) require(d.norm() > 0, ErrorKind::parameter, "zero keypoint direction");
  }
  if (!kp.orientations.empty()) {
    require(kp.orientations.size() == kp.count(), ErrorKind::shape, "one orientation per keypoint required");
    for (const auto& q : kp.orientations)
      require(std::abs(q.norm() - 1.0) < 1e-8, ErrorKind::parameter, "keypoint quaternion not unit");
  }
}

struct ScalarField {
  VecX values;
  double tau = 0;
};

struct TangentVectorField {
  std::vector<Vec3> vectors;
  bool normalized = false;
  std::vector<char> degenerate;
};

struct SurfaceFrameField {
  std::vector<Mat3> frames;  // columns (u, v, n)
  std::vector<char> degenerate;

  std::size_t size() const { return frames.size(); }
  std::size_t degenerate_count() const { return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1)); }
};

inline ScalarField keypoint_initial_condition(std::size_t n, const KeypointSet& kp) {
  require(kp.count() > 0, ErrorKind::parameter, "empty keypoint set");
  validate(kp, n);
  ScalarField f{VecX::Zero(static_cast<Eigen::Index>(n)), 0.0};
  for (auto s : kp.sources) f.values(static_cast<Eigen::Index>(s)) = 1.0;
  for (auto s : kp.sinks) f.values(static_cast<Eigen::Index>(s)) = -1.0;
  return f;
}

inline double normalize_diffusion_time(double tau_raw, double h) {
  require(h > 0, ErrorKind::parameter, "mean spacing must be positive");
  return tau_raw * h * h;
}

// Implicit heat step (M - tau C) u = M u0 with one cached factorisation per tau.
class SurfaceDiffuser {
 public:
  explicit SurfaceDiffuser(std::shared_ptr<const LaplacianPair> lap) : lap_(std::move(lap)) {}

  const LaplacianPair& laplacian() const { return *lap_; }

  std::shared_ptr<const Factorization> factorization(double tau_raw) {
    require(tau_raw >= 0 && std::isfinite(tau_raw), ErrorKind::parameter, "diffusion time must be non-negative");
    double tau = normalize_diffusion_time(tau_raw, lap_->h);
    std::lock_guard lock(mutex_);
    auto it = cache_.find(tau);
    if (it != cache_.end()) return it->second;
    SparseMatrix a = SparseMatrix(lap_->M.asDiagonal()) - tau * lap_->C;
    auto f = std::make_shared<const Factorization>(Factorization::factorize_spd(a, {}, tau));
    cache_.emplace(tau, f);
    return f;
  }

  MatX diffuse(const MatX& u0, double tau_raw) {
    require(u0.rows() == lap_->size(), ErrorKind::shape, "field size does not match Laplacian");
    require(tau_raw >= 0 && std::isfinite(tau_raw), ErrorKind::parameter, "diffusion time must be non-negative");
    if (tau_raw == 0) return u0;
    return factorization(tau_raw)->solve(MatX(lap_->M.asDiagonal() * u0));
  }

  VecX diffuse(const VecX& u0, double tau_raw) { return diffuse(MatX(u0), tau_raw).col(0); }

  ScalarField diffuse(const ScalarField& u0, double tau_raw) {
    return {diffuse(u0.values, tau_raw), normalize_diffusion_time(tau_raw, lap_->h)};
  }

  std::size_t factorization_count() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }

 private:
  std::shared_ptr<const LaplacianPair> lap_;
  mutable std::mutex mutex_;
  std::map<double, std::shared_ptr<const Factorization>> cache_;
};

inline ScalarField diffuse_scalar(const LaplacianPair& lap, const ScalarField& u0, double tau_raw) {
  SurfaceDiffuser d(std::shared_ptr<const LaplacianPair>(&lap, [](const LaplacianPair*) {}));
  return d.diffuse(u0, tau_raw);
}

// Gaussian-weighted least-squares gradient in each tangent plane.
inline TangentVectorField surface_gradient(const PointCloud& cloud, const VecX& values, int k = 16) {
  require(values.size() == static_cast<Eigen::Index>(cloud.size()), ErrorKind::shape, "field does not match cloud");
  require(cloud.has_normals(), ErrorKind::parameter, "gradient needs normals");
  double h = spacing_of(cloud);
  KdTree tree(cloud.points);
  TangentVectorField g;
  g.vectors.assign(cloud.size(), Vec3::Zero());
  g.degenerate.assign(cloud.size(), 0);
  parallel_for(cloud.size(), [&](std::size_t i) {
    const Vec3& p = cloud.points[i];
    const Vec3& n = cloud.normals[i];
    Vec3 e1 = any_perpendicular(n), e2 = n.cross(e1);
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (const auto& nb : tree.knn(p, static_cast<std::size_t>(k) + 1)) {
      if (nb.index == i) continue;
      Vec3 d = cloud.points[nb.index] - p;
      Eigen::Vector2d t(d.dot(e1), d.dot(e2));
      double w = std::exp(-nb.dist2 / (h * h));
      double df = values(static_cast<Eigen::Index>(nb.index)) - values(static_cast<Eigen::Index>(i));
      a += w * t * t.transpose();
      b += w * df * t;
    }
    double tr = a.trace();
    if (!(tr > 0) || a.determinant() <= 1e-10 * tr * tr) {
      g.degenerate[i] = 1;
      return;
    }
    Eigen::Vector2d s = a.ldlt().solve(b);
    g.vectors[i] = s.x() * e1 + s.y() * e2;
  });
  return g;
}

namespace detail {

// Fill flagged frames from already-valid neighbours, round by round; any
// vertex left over copies the nearest valid frame.
inline void fill_degenerate_frames(const PointCloud& cloud, SurfaceFrameField& f, int k) {
  std::size_t n = cloud.size();
  std::vector<char> valid(n);
  for (std::size_t i = 0; i < n; ++i) valid[i] = !f.degenerate[i];
  if (std::none_of(valid.begin(), valid.end(), [](char c) { return c; }))
    throw Error(ErrorKind::field, "every vertex of the frame field is degenerate");
  if (std::all_of(valid.begin(), valid.end(), [](char c) { return c; })) return;
  KdTree tree(cloud.points);
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!valid[i])
      for (const auto& nb : tree.knn(cloud.points[i], static_cast<std::size_t>(k) + 1))
        if (nb.index != i) nbrs[i].push_back(nb.index);
  auto retangent = [&](std::size_t i, const Mat3& avg) {
    const Vec3& nn = cloud.normals[i];
    Vec3 u = avg.col(0) - avg.col(0).dot(nn) * nn;
    if (u.norm() < 1e-9) return avg;
    u.normalize();
    return frame_from_columns(u, nn.cross(u), nn);
  };
  bool progress = true;
  while (progress) {
    progress = false;
    std::vector<std::pair<std::size_t, Mat3>> updates;
    for (std::size_t i = 0; i < n; ++i) {
      if (valid[i]) continue;
      std::vector<Vec4> qs;
      for (auto j : nbrs[i])
        if (valid[j]) qs.push_back(quat_from_matrix(f.frames[j]));
      if (qs.empty()) continue;
      for (auto& q : qs)
        if (q.dot(qs.front()) < 0) q = -q;
      try {
        updates.emplace_back(i, retangent(i, matrix_from_quat(average_quaternions(qs))));
      } catch (const Error&) {
        updates.emplace_back(i, retangent(i, matrix_from_quat(qs.front())));
      }
    }
    for (auto& [i, r] : updates) {
      f.frames[i] = r;
      valid[i] = 1;
      progress = true;
    }
  }
  std::vector<Vec3> good_pts;
  std::vector<std::size_t> good_ids;
  for (std::size_t i = 0; i < n; ++i)
    if (valid[i]) {
      good_pts.push_back(cloud.points[i]);
      good_ids.push_back(i);
    }
  KdTree good(good_pts);
  for (std::size_t i = 0; i < n; ++i)
    if (!valid[i]) f.frames[i] = retangent(i, f.frames[good_ids[good.nearest(cloud.points[i]).index]]);
}

}  // namespace detail

// u = tangent part of the given direction, v = n x u, columns (u, v, n).
inline SurfaceFrameField build_surface_frames(const PointCloud& cloud, const TangentVectorField& grad, int k = 16) {
  require(cloud.has_normals(), ErrorKind::parameter, "frames need normals");
  require(grad.vectors.size() == cloud.size(), ErrorKind::shape, "vector field does not match cloud");
  std::size_t n = cloud.size();
  SurfaceFrameField f;
  f.frames.assign(n, Mat3::Identity());
  f.degenerate.assign(n, 0);
  std::vector<Vec3> tang(n);
  double gmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& nn = cloud.normals[i];
    tang[i] = grad.vectors[i] - grad.vectors[i].dot(nn) * nn;
    gmax = std::max(gmax, tang[i].norm());
  }
  double eps = 1e-6 * gmax;
  for (std::size_t i = 0; i < n; ++i) {
    bool flagged = !grad.degenerate.empty() && grad.degenerate[i];
    double len = tang[i].norm();
    if (flagged || !(len > eps) || gmax == 0) {
      f.degenerate[i] = 1;
      continue;
    }
    Vec3 u = tang[i] / len;
    const Vec3& nn = cloud.normals[i];
    f.frames[i] = frame_from_columns(u, nn.cross(u), nn);
  }
  detail::fill_degenerate_frames(cloud, f, k);
  return f;
}

// Component-wise diffusion of keypoint directions, projected to the tangent planes.
inline TangentVectorField diffuse_vector_components(SurfaceDiffuser& diff, const PointCloud& cloud,
                                                    const KeypointSet& kp, double tau_raw, double rel_eps = 1e-6) {
  std::size_t n = cloud.size();
  validate(kp, n);
  require(!kp.directions.empty(), ErrorKind::parameter, "vector diffusion needs keypoint directions");
  require(cloud.has_normals(), ErrorKind::parameter, "vector diffusion needs normals");
  MatX u0 = MatX::Zero(static_cast<Eigen::Index>(n), 3);
  auto ids = kp.all();
  for (std::size_t k = 0; k < ids.size(); ++k) u0.row(static_cast<Eigen::Index>(ids[k])) = kp.directions[k].transpose();
  MatX u = diff.diffuse(u0, tau_raw);
  TangentVectorField out;
  out.normalized = true;
  out.vectors.assign(n, Vec3::Zero());
  out.degenerate.assign(n, 0);
  double vmax = 0;
  std::vector<Vec3> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = u.row(static_cast<Eigen::Index>(i)).transpose();
    vmax = std::max(vmax, raw[i].norm());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& nn = cloud.normals[i];
    Vec3 t = raw[i] - raw[i].dot(nn) * nn;
    if (raw[i].norm() <= rel_eps * vmax || t.norm() <= rel_eps * vmax) {
      out.degenerate[i] = 1;
      continue;
    }
    out.vectors[i] = t.normalized();
  }
  return out;
}

struct OrientationDiffusion {
  SurfaceFrameField field;
  std::vector<Vec4> quaternions;
  std::vector<char> low_support;  // indicator fell below the clamp
};

// Pure-quaternion diffusion with indicator/magnitude compensation.
inline OrientationDiffusion diffuse_orientations(SurfaceDiffuser& diff, const KeypointSet& kp, double tau_raw) {
  std::size_t n = static_cast<std::size_t>(diff.laplacian().size());
  validate(kp, n);
  require(kp.count() > 0, ErrorKind::parameter, "orientation diffusion needs keypoints");
  require(!kp.orientations.empty(), ErrorKind::parameter, "orientation diffusion needs keypoint quaternions");
  std::vector<Vec4> qs = kp.orientations;
  qs[0] = canonical(qs[0]);
  for (auto& q : qs)
    if (q.dot(qs[0]) < 0) q = -q;
  for (std::size_t a = 0; a < qs.size(); ++a)
    for (std::size_t b = a + 1; b < qs.size(); ++b)
      if (quat_angle(qs[a], qs[b]) >= pi - 1e-3)
        throw Error(ErrorKind::ambiguity, "keypoints " + std::to_string(a) + " and " + std::to_string(b) +
                                              " are rotated by nearly 180 degrees relative to each other");
  auto ids = kp.all();
  MatX u0 = MatX::Zero(static_cast<Eigen::Index>(n), 5);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    Vec3 v = quat_log(qs[k]);
    auto r = static_cast<Eigen::Index>(ids[k]);
    u0.block<1, 3>(r, 0) = v.transpose();
    u0(r, 3) = 1.0;
    u0(r, 4) = v.norm();
  }
  MatX u = diff.diffuse(u0, tau_raw);
  OrientationDiffusion out;
  out.field.frames.resize(n);
  out.field.degenerate.assign(n, 0);
  out.quaternions.resize(n);
  out.low_support.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = static_cast<Eigen::Index>(i);
    Vec3 v = u.block<1, 3>(r, 0).transpose();
    double phi = u(r, 3), m = u(r, 4);
    if (phi < 1e-12) {
      phi = 1e-12;
      out.low_support[i] = 1;
      out.field.degenerate[i] = 1;
    }
    double len = v.norm();
    Vec3 vbar = len > 0 ? Vec3(v * (m / (len * phi))) : Vec3::Zero();
    out.quaternions[i] = quat_exp(vbar);
    out.field.frames[i] = matrix_from_quat(out.quaternions[i]);
  }
  return out;
}

// Scalar-diffusion frame field: u follows the descent of the diffused keypoint
// indicator (from sources toward sinks).
struct DofSurface {
  ScalarField diffused;
  VecX normalized;  // diffused values rescaled to [0, 1]
  TangentVectorField direction;
  SurfaceFrameField frames;
};

inline VecX rescale_unit(const VecX& v) {
  double lo = v.minCoeff(), hi = v.maxCoeff();
  if (!(hi > lo)) return VecX::Constant(v.size(), 0.5);
  return (v.array() - lo) / (hi - lo);
}

inline DofSurface build_dof_surface(SurfaceDiffuser& diff, const PointCloud& cloud, const KeypointSet& kp,
                                    double tau_raw, int k = 16) {
  DofSurface s;
  s.diffused = diff.diffuse(keypoint_initial_condition(cloud.size(), kp), tau_raw);
  s.normalized = rescale_unit(s.diffused.values);
  s.direction = surface_gradient(cloud, s.diffused.values, k);
  for (auto& g : s.direction.vectors) g = -g;
  s.frames = build_surface_frames(cloud, s.direction, k);
  return s;
}

}  // namespace dof
