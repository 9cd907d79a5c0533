#pragma once

#include "dof/actions.hpp"

#include <functional>

namespace dof {

enum class BaselineKind {
  cartesian,
  cylindrical,
  spherical,
  multi_frame_nearest,
  multi_frame_softmax,
  nearest_projection,
  vector_projection,
  euclidean_diffusion,
};

inline const char* kind_name(BaselineKind k) {
  static constexpr const char* names[] = {"cartesian",           "cylindrical",        "spherical",
                                          "multi_frame_nearest", "multi_frame_softmax", "nearest_projection",
                                          "vector_projection",   "euclidean_diffusion"};
  return names[static_cast<int>(k)];
}

inline BaselineKind parse_baseline(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(BaselineKind::euclidean_diffusion); ++i)
    if (s == kind_name(static_cast<BaselineKind>(i))) return static_cast<BaselineKind>(i);
  throw Error(ErrorKind::parameter, "unknown baseline '" + s + "'");
}

struct SampledFrame {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

struct BaselineFrameModel {
  BaselineKind kind = BaselineKind::cartesian;
  Vec3 axis = Vec3::UnitZ();
  Vec3 origin = Vec3::Zero();
  std::vector<SampledFrame> frames;  // multi-frame and nearest-projection kinds
  double temperature = 0.0;          // softmax
  std::vector<Vec3> sources, sinks;  // vector projection and Euclidean diffusion
  std::shared_ptr<const Scene> scene;
  std::shared_ptr<const KdTree> tree;  // over frame positions
};

inline void validate(const BaselineFrameModel& m) {
  require(std::abs(m.axis.norm() - 1.0) < 1e-9, ErrorKind::parameter, "baseline axis must be unit");
  switch (m.kind) {
    case BaselineKind::multi_frame_softmax:
      require(m.temperature > 0, ErrorKind::parameter, "softmax temperature must be positive");
      [[fallthrough]];
    case BaselineKind::multi_frame_nearest:
    case BaselineKind::nearest_projection:
      require(!m.frames.empty() && m.tree, ErrorKind::parameter, "sampled-frame baseline has no frames");
      break;
    case BaselineKind::vector_projection:
    case BaselineKind::euclidean_diffusion:
      require(m.scene && !m.scene->empty(), ErrorKind::parameter, "projection baseline needs a scene");
      require(!m.sources.empty() || !m.sinks.empty(), ErrorKind::parameter, "projection baseline needs keypoints");
      break;
    default: break;
  }
}

// Body-fixed frames aligned with the keypoint-to-keypoint axis, origin at its midpoint.
inline BaselineFrameModel body_fixed(BaselineKind kind, const Vec3& source, const Vec3& sink) {
  require(kind == BaselineKind::cartesian || kind == BaselineKind::cylindrical || kind == BaselineKind::spherical,
          ErrorKind::parameter, "not a body-fixed baseline");
  Vec3 d = sink - source;
  require(d.norm() > 0, ErrorKind::degenerate, "keypoints coincide, symmetry axis undefined");
  BaselineFrameModel m;
  m.kind = kind;
  m.axis = d.normalized();
  m.origin = 0.5 * (source + sink);
  return m;
}

inline BaselineFrameModel sampled_frames_model(BaselineKind kind, std::vector<SampledFrame> frames,
                                               double temperature = 0.0) {
  require(kind == BaselineKind::multi_frame_nearest || kind == BaselineKind::multi_frame_softmax ||
              kind == BaselineKind::nearest_projection,
          ErrorKind::parameter, "not a sampled-frame baseline");
  BaselineFrameModel m;
  m.kind = kind;
  m.temperature = temperature;
  m.frames = std::move(frames);
  std::vector<Vec3> pts;
  pts.reserve(m.frames.size());
  for (const auto& f : m.frames) pts.push_back(f.position);
  m.tree = std::make_shared<const KdTree>(pts);
  return m;
}

// Every surface vertex with its frame: the nearest-frame projection baseline.
inline BaselineFrameModel nearest_projection_model(const PointCloud& cloud, const SurfaceFrameField& frames) {
  require(frames.size() == cloud.size(), ErrorKind::shape, "frame field does not match cloud");
  std::vector<SampledFrame> f(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) f[i] = {cloud.points[i], frames.frames[i]};
  return sampled_frames_model(BaselineKind::nearest_projection, std::move(f));
}

inline BaselineFrameModel keypoint_projection_model(BaselineKind kind, std::shared_ptr<const Scene> scene,
                                                    std::vector<Vec3> sources, std::vector<Vec3> sinks) {
  require(kind == BaselineKind::vector_projection || kind == BaselineKind::euclidean_diffusion, ErrorKind::parameter,
          "not a keypoint projection baseline");
  BaselineFrameModel m;
  m.kind = kind;
  m.scene = std::move(scene);
  m.sources = std::move(sources);
  m.sinks = std::move(sinks);
  return m;
}

namespace detail {

inline Mat3 axis_frame(const Vec3& axis) {
  Vec3 x = Vec3::UnitX() - Vec3::UnitX().dot(axis) * axis;
  if (x.norm() < 1e-6) x = Vec3::UnitY() - Vec3::UnitY().dot(axis) * axis;
  x.normalize();
  return frame_from_columns(x, axis.cross(x), axis);
}

// Softmax weights exp(-d_k / T) normalised, shifted by the minimum distance.
inline std::vector<double> softmax_weights(const std::vector<double>& d, double t) {
  double lo = *std::min_element(d.begin(), d.end());
  std::vector<double> w(d.size());
  double sum = 0;
  for (std::size_t k = 0; k < d.size(); ++k) sum += w[k] = std::exp(-(d[k] - lo) / t);
  for (auto& x : w) x /= sum;
  return w;
}

// Tangent frame with u along the tangential part of dir; the normal is the
// direction away from the closest surface point.
inline Mat3 tangent_frame(const Scene& scene, const Vec3& x, const Vec3& dir) {
  ClosestHit h = scene.closest_point(x);
  Vec3 n = x - h.point;
  if (n.norm() < 1e-12) {
    require(scene.is_cloud(h.surface_id) && scene.cloud(h.surface_id).has_normals(), ErrorKind::degenerate,
            "query on the surface has no normal");
    n = scene.cloud(h.surface_id).normals[h.vertex];
  }
  n.normalize();
  Vec3 u = dir - dir.dot(n) * n;
  require(u.norm() > 1e-12, ErrorKind::degenerate, "projected direction vanishes");
  u.normalize();
  return frame_from_columns(u, n.cross(u), n);
}

}  // namespace detail

inline Mat3 baseline_frame(const BaselineFrameModel& m, const Vec3& x) {
  const double tiny = 1e-12;
  switch (m.kind) {
    case BaselineKind::cartesian: return detail::axis_frame(m.axis);
    case BaselineKind::cylindrical: {
      Vec3 d = x - m.origin;
      Vec3 r = d - d.dot(m.axis) * m.axis;
      require(r.norm() > tiny, ErrorKind::degenerate, "cylindrical frame undefined on the axis");
      r.normalize();
      return frame_from_columns(r, m.axis.cross(r), m.axis);
    }
    case BaselineKind::spherical: {
      Vec3 d = x - m.origin;
      Vec3 az = m.axis.cross(d);
      require(az.norm() > tiny * std::max(1.0, d.norm()), ErrorKind::degenerate,
              "spherical frame undefined on the polar axis");
      Vec3 r = d.normalized();
      az.normalize();
      return frame_from_columns(r, az.cross(r), az);
    }
    case BaselineKind::multi_frame_nearest:
    case BaselineKind::nearest_projection:
      require(m.tree != nullptr, ErrorKind::parameter, "sampled-frame baseline has no frames");
      return m.frames[m.tree->nearest(x).index].rotation;
    case BaselineKind::multi_frame_softmax: {
      require(!m.frames.empty() && m.temperature > 0, ErrorKind::parameter, "softmax baseline needs frames and T > 0");
      if (m.frames.size() == 1) return m.frames[0].rotation;
      std::vector<double> d;
      std::vector<Vec4> qs;
      for (const auto& f : m.frames) {
        d.push_back((x - f.position).norm());
        qs.push_back(quat_from_matrix(f.rotation));
      }
      return matrix_from_quat(average_quaternions(qs, detail::softmax_weights(d, m.temperature)));
    }
    case BaselineKind::vector_projection: {
      // Inverse-square weighted unit vectors: away from sources, toward sinks.
      Vec3 v = Vec3::Zero();
      for (const auto& s : m.sources) {
        Vec3 d = x - s;
        v += d / std::pow(std::max(d.norm(), tiny), 3);
      }
      for (const auto& s : m.sinks) {
        Vec3 d = s - x;
        v += d / std::pow(std::max(d.norm(), tiny), 3);
      }
      return detail::tangent_frame(*m.scene, x, v);
    }
    case BaselineKind::euclidean_diffusion: {
      // Descent of sum 1/|x - s| - sum 1/|x - t|, the free-space harmonic extension.
      Vec3 g = Vec3::Zero();
      for (const auto& s : m.sources) {
        Vec3 d = x - s;
        g -= d / std::pow(std::max(d.norm(), tiny), 3);
      }
      for (const auto& s : m.sinks) {
        Vec3 d = x - s;
        g += d / std::pow(std::max(d.norm(), tiny), 3);
      }
      return detail::tangent_frame(*m.scene, x, -g);
    }
  }
  throw Error(ErrorKind::parameter, "unknown baseline kind");
}

struct FpsSample {
  std::vector<std::size_t> indices;
  std::vector<SampledFrame> frames;
};

// Greedy farthest point sampling from vertex 0 with the surface frame at each sample.
inline FpsSample sample_frames_fps(const PointCloud& cloud, const SurfaceFrameField& frames, std::size_t n) {
  require(n >= 1 && n <= cloud.size(), ErrorKind::parameter, "FPS sample count must be in [1, point count]");
  require(frames.size() == cloud.size(), ErrorKind::shape, "frame field does not match cloud");
  FpsSample out;
  std::vector<double> d(cloud.size(), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  for (std::size_t k = 0; k < n; ++k) {
    out.indices.push_back(next);
    out.frames.push_back({cloud.points[next], frames.frames[next]});
    std::size_t best = 0;
    double best_d = -1;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      d[i] = std::min(d[i], (cloud.points[i] - cloud.points[next]).squaredNorm());
      if (d[i] > best_d) {
        best_d = d[i];
        best = i;
      }
    }
    next = best;
  }
  return out;
}

// Linear interpolation of a series to `len` samples on a uniform index scale.
inline std::vector<Vec3> resample(const std::vector<Vec3>& s, std::size_t len) {
  require(!s.empty() && len >= 1, ErrorKind::size, "cannot resample an empty series");
  std::vector<Vec3> out(len);
  if (s.size() == 1 || len == 1) {
    std::fill(out.begin(), out.end(), s.front());
    return out;
  }
  for (std::size_t j = 0; j < len; ++j) {
    double t = static_cast<double>(j) * static_cast<double>(s.size() - 1) / static_cast<double>(len - 1);
    std::size_t i = std::min(static_cast<std::size_t>(t), s.size() - 2);
    double f = t - static_cast<double>(i);
    out[j] = (1 - f) * s[i] + f * s[i + 1];
  }
  return out;
}

using FrameSource = std::function<Mat3(const TrajectorySample&)>;

inline FrameSource dof_frames() {
  return [](const TrajectorySample& s) { return s.frame; };
}
inline FrameSource model_frames(BaselineFrameModel m) {
  validate(m);
  return [m = std::move(m)](const TrajectorySample& s) { return baseline_frame(m, s.x); };
}

// Forward-difference velocity at each sample but the last, expressed in the given frames.
inline std::vector<Vec3> local_velocities(const Trajectory& t, double delta, const FrameSource& frame) {
  require(delta > 0, ErrorKind::parameter, "step size must be positive");
  std::vector<Vec3> v;
  if (t.size() < 2) return v;
  v.reserve(t.size() - 1);
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    v.push_back(frame(t.samples[i]).transpose() * ((t.samples[i + 1].x - t.samples[i].x) / delta));
  return v;
}

struct ActionStats {
  std::vector<Vec3> mean;
  std::vector<Vec3> stddev;  // population std across series
  double average_std = 0.0;  // mean over time and axes
  Vec3 axis_std = Vec3::Zero();
};

// Series resampled to the median length, then per-time statistics.
inline ActionStats action_stats(const std::vector<std::vector<Vec3>>& series) {
  require(!series.empty(), ErrorKind::size, "no series to aggregate");
  std::vector<std::size_t> lens;
  for (const auto& s : series) {
    require(!s.empty(), ErrorKind::size, "empty action series");
    lens.push_back(s.size());
  }
  std::sort(lens.begin(), lens.end());
  std::size_t len = lens[lens.size() / 2];
  std::vector<std::vector<Vec3>> rs;
  for (const auto& s : series) rs.push_back(resample(s, len));
  ActionStats st;
  st.mean.assign(len, Vec3::Zero());
  st.stddev.assign(len, Vec3::Zero());
  double n = static_cast<double>(rs.size());
  for (std::size_t j = 0; j < len; ++j) {
    // Running mean: identical series give an exactly zero spread.
    Vec3 m = rs[0][j];
    for (std::size_t k = 1; k < rs.size(); ++k) m += (rs[k][j] - m) / static_cast<double>(k + 1);
    Vec3 var = Vec3::Zero();
    for (const auto& r : rs) var += (r[j] - m).cwiseAbs2();
    st.mean[j] = m;
    st.stddev[j] = (var / n).cwiseSqrt();
    st.axis_std += st.stddev[j];
  }
  st.axis_std /= static_cast<double>(len);
  st.average_std = st.axis_std.mean();
  return st;
}

// One frame source per trajectory (each instance carries its own frame model).
inline ActionStats action_stats(const std::vector<Trajectory>& trajs, double delta,
                                const std::vector<FrameSource>& frames) {
  require(!trajs.empty(), ErrorKind::size, "no trajectories");
  require(frames.size() == trajs.size() || frames.size() == 1, ErrorKind::shape, "one frame source per trajectory");
  std::vector<std::vector<Vec3>> series;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    auto v = local_velocities(trajs[i], delta, frames[frames.size() == 1 ? 0 : i]);
    require(!v.empty(), ErrorKind::size, "trajectory " + std::to_string(i) + " has fewer than two samples");
    series.push_back(std::move(v));
  }
  return action_stats(series);
}

// Index ranges [begin, end) starting at each lift onset; the last runs to the end.
inline std::vector<std::pair<std::size_t, std::size_t>> period_ranges(const std::vector<Phase>& phases, int n_cycles,
                                                                      Phase marker = Phase::lift) {
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < phases.size(); ++i)
    if (phases[i] == marker && (i == 0 || phases[i - 1] != marker)) on.push_back(i);
  if (on.size() < static_cast<std::size_t>(n_cycles))
    throw Error(ErrorKind::cycle_count, "expected " + std::to_string(n_cycles) + " cycles, found " +
                                            std::to_string(on.size()));
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (std::size_t k = 0; k < static_cast<std::size_t>(n_cycles); ++k)
    r.emplace_back(on[k], k + 1 < on.size() ? on[k + 1] : phases.size());
  return r;
}

// Per-cycle segments of a per-sample series, resampled to the median segment length.
inline std::vector<std::vector<Vec3>> align_periods(const Trajectory& t, const std::vector<Vec3>& series,
                                                    int n_cycles) {
  std::vector<Phase> phases;
  for (const auto& s : t.samples) phases.push_back(s.phase);
  auto ranges = period_ranges(phases, n_cycles);
  std::vector<std::vector<Vec3>> segs;
  std::vector<std::size_t> lens;
  for (auto [b, e] : ranges) {
    e = std::min(e, series.size());
    require(e > b, ErrorKind::cycle_count, "empty cycle segment");
    segs.emplace_back(series.begin() + static_cast<std::ptrdiff_t>(b), series.begin() + static_cast<std::ptrdiff_t>(e));
    lens.push_back(e - b);
  }
  std::sort(lens.begin(), lens.end());
  for (auto& s : segs) s = resample(s, lens[lens.size() / 2]);
  return segs;
}

inline std::vector<std::vector<Vec3>> align_periods(const Trajectory& t, int n_cycles) {
  return align_periods(t, t.positions(), n_cycles);
}

// Position RMSE after resampling traj to the reference length.
inline double rmse(const Trajectory& traj, const Trajectory& ref) {
  require(!traj.empty() && !ref.empty(), ErrorKind::size, "RMSE of an empty trajectory");
  auto a = resample(traj.positions(), ref.size());
  auto b = ref.positions();
  double ss = 0;
  for (std::size_t i = 0; i < b.size(); ++i) ss += (a[i] - b[i]).squaredNorm();
  return std::sqrt(ss / static_cast<double>(b.size()));
}

// Row-major grid of frames; invalid cells are skipped.
struct FrameGrid {
  int nx = 0, ny = 0;
  std::vector<Mat3> frames;
  std::vector<char> valid;

  const Mat3& at(int i, int j) const { return frames[static_cast<std::size_t>(j * nx + i)]; }
  bool ok(int i, int j) const { return valid.empty() || valid[static_cast<std::size_t>(j * nx + i)]; }
};

struct DeviationStats {
  double average = 0, stddev = 0, max = 0;  // degrees
  std::vector<double> per_point;
};

// Per point: the largest angle between its x-direction and those of its 4-neighbours.
// With a plane normal, x-directions are compared as in-plane angles against a common
// reference direction; otherwise as 3D angles.
inline DeviationStats angular_deviation_stats(const FrameGrid& g, const std::optional<Vec3>& plane_normal = {},
                                              const Vec3& reference = Vec3::UnitX()) {
  require(g.nx >= 1 && g.ny >= 1 && g.frames.size() == static_cast<std::size_t>(g.nx * g.ny), ErrorKind::shape,
          "frame grid size mismatch");
  std::vector<double> ang(g.frames.size(), 0.0);
  Vec3 e1 = reference, e2 = Vec3::Zero();
  if (plane_normal) {
    Vec3 n = plane_normal->normalized();
    e1 = (reference - reference.dot(n) * n).normalized();
    e2 = n.cross(e1);
    for (std::size_t k = 0; k < g.frames.size(); ++k) {
      Vec3 x = g.frames[k].col(0);
      ang[k] = std::atan2(x.dot(e2), x.dot(e1));
    }
  }
  auto diff = [&](int a, int b) {
    if (plane_normal) {
      double d = std::abs(ang[static_cast<std::size_t>(a)] - ang[static_cast<std::size_t>(b)]);
      return std::min(d, 2 * pi - d);
    }
    Vec3 u = g.frames[static_cast<std::size_t>(a)].col(0), w = g.frames[static_cast<std::size_t>(b)].col(0);
    return std::atan2(u.cross(w).norm(), u.dot(w));
  };
  DeviationStats st;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (!g.ok(i, j)) continue;
      double m = 0;
      bool any = false;
      const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int a = i + di[k], b = j + dj[k];
        if (a < 0 || b < 0 || a >= g.nx || b >= g.ny || !g.ok(a, b)) continue;
        m = std::max(m, diff(j * g.nx + i, b * g.nx + a));
        any = true;
      }
      if (any) st.per_point.push_back(m * 180 / pi);
    }
  if (st.per_point.empty()) return st;
  double n = static_cast<double>(st.per_point.size());
  for (double v : st.per_point) {
    st.average += v;
    st.max = std::max(st.max, v);
  }
  st.average /= n;
  for (double v : st.per_point) st.stddev += (v - st.average) * (v - st.average);
  st.stddev = std::sqrt(st.stddev / n);
  return st;
}

enum class Orthonormalization { svd, z_fixed };

struct VectorDiffusionFrames {
  SurfaceFrameField field;
  std::vector<Mat3> raw;  // diffused column matrices before projection
};

// Each column of the keypoint frames diffused as its own vector field, then
// projected to a rotation.
inline VectorDiffusionFrames orthonormalized_vector_diffusion(SurfaceDiffuser& diff, const KeypointSet& kp,
                                                              double tau_raw, Orthonormalization mode) {
  std::size_t n = static_cast<std::size_t>(diff.laplacian().size());
  validate(kp, n);
  require(!kp.orientations.empty(), ErrorKind::parameter, "vector diffusion needs oriented keypoints");
  MatX u0 = MatX::Zero(static_cast<Eigen::Index>(n), 9);
  auto ids = kp.all();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    Mat3 r = matrix_from_quat(kp.orientations[k]);
    for (int c = 0; c < 3; ++c) u0.block<1, 3>(static_cast<Eigen::Index>(ids[k]), 3 * c) = r.col(c).transpose();
  }
  MatX u = diff.diffuse(u0, tau_raw);
  VectorDiffusionFrames out;
  out.raw.resize(n);
  out.field.frames.assign(n, Mat3::Identity());
  out.field.degenerate.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    Mat3 m;
    for (int c = 0; c < 3; ++c) m.col(c) = u.block<1, 3>(static_cast<Eigen::Index>(i), 3 * c).transpose();
    out.raw[i] = m;
    Eigen::JacobiSVD<Mat3> svd(m);
    Vec3 s = svd.singularValues();
    if (!(s(0) > 0) || s(2) <= 1e-9 * s(0)) {
      out.field.degenerate[i] = 1;
      continue;
    }
    if (mode == Orthonormalization::svd) {
      out.field.frames[i] = nearest_rotation(m);
      continue;
    }
    Vec3 z = m.col(2).normalized();
    Vec3 x = m.col(0) - m.col(0).dot(z) * z;
    if (x.norm() <= 1e-9 * s(0)) {
      out.field.degenerate[i] = 1;
      continue;
    }
    x.normalize();
    out.field.frames[i] = frame_from_columns(x, z.cross(x), z);
  }
  return out;
}

}  // namespace dof
