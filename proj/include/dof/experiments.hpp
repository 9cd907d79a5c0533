#pragma once

#include "dof/eval.hpp"
#include "dof/keypoints.hpp"
#include "dof/perturb.hpp"
#include "dof/pipeline.hpp"
#include "dof/shapes.hpp"

#include <chrono>

namespace dof::experiments {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// A cloud with tracked source/sink vertices and a start vertex for the tool.
struct TaskObject {
  PointCloud cloud;
  KeypointSet keypoints;
  std::size_t start_vertex = 0;
};

inline TaskObject tube_task(const shapes::Tube& tube, PointCloud cloud, double source_s, double start_s,
                            double start_psi) {
  KdTree t(cloud.points);
  TaskObject o;
  o.keypoints.sources = {t.nearest(tube.axis(source_s)).index};
  o.keypoints.sinks = {t.nearest(tube.axis(1.0 - source_s)).index};
  o.start_vertex = t.nearest(tube.at(start_s, start_psi)).index;
  o.cloud = std::move(cloud);
  return o;
}

// Pear peeled from the stem (top) toward the bottom.
inline TaskObject pear_task(double spacing = 0.003) {
  return tube_task(shapes::pear_tube(), shapes::pear(spacing), 1.0, 0.8, 0.0);
}

// Banana traversed from the stem end to the far tip.
inline TaskObject banana_task(double spacing = 0.003) {
  return tube_task(shapes::banana_tube(), shapes::banana(spacing), 0.0, 0.2, pi / 2);
}

inline Vec3 offset_point(const PointCloud& c, std::size_t v, double offset) {
  return c.points.at(v) + offset * c.normals.at(v);
}

// ---------------------------------------------------------------------------
// Peel transfer over deformed instances.

struct PeelStudyOptions {
  int instances = 50;
  std::uint64_t seed = 1000;
  double tau_raw = 1000.0;
  PrimitiveSpec spec = [] {
    PrimitiveSpec s;
    s.kind = PrimitiveSpec::Kind::peel;
    s.cycles = 3;
    return s;
  }();
  WosParams wos;
  std::vector<int> frame_counts{1, 5, 10, 25, 50};
  double temperature_h = 2.0;  // softmax T in units of mean spacing
  double spacing = 0.003;
};

struct MultiFrameRow {
  int n = 0;
  double nearest = 0.0;
  double softmax = 0.0;
};

struct PeelStudy {
  std::vector<Trajectory> trajectories;
  std::vector<DeformParams> params;
  ActionStats dof, cartesian, cylindrical, spherical;
  std::vector<MultiFrameRow> multi;
  int incomplete = 0;  // trajectories that errored or missed cycles
  double seconds = 0.0;
};

inline PeelStudy peel_study(const PeelStudyOptions& opt, std::ostream* log = nullptr) {
  auto t0 = std::chrono::steady_clock::now();
  TaskObject base = pear_task(opt.spacing);
  PeelStudy out;
  std::vector<FrameSource> dof, cart, cyl, sph;
  std::vector<std::vector<FrameSource>> near(opt.frame_counts.size()), soft(opt.frame_counts.size());
  // Body-fixed sample sites: FPS on the undeformed pear, tracked by index on each instance.
  std::vector<std::vector<std::size_t>> sites;
  SurfaceFrameField blank;
  blank.frames.assign(base.cloud.size(), Mat3::Identity());
  blank.degenerate.assign(base.cloud.size(), 0);
  for (int n : opt.frame_counts)
    sites.push_back(sample_frames_fps(base.cloud, blank, static_cast<std::size_t>(n)).indices);
  for (int i = 0; i < opt.instances; ++i) {
    Deformed d = random_deform(base.cloud, opt.seed + static_cast<std::uint64_t>(i));
    ObjectFieldOptions fo;
    fo.tau_raw = opt.tau_raw;
    fo.wos = opt.wos;
    ObjectField o = build_object_field(d.cloud, base.keypoints, fo);
    Vec3 src = o.source_position(), snk = o.sink_position();
    Vec3 start = offset_point(o.cloud, base.start_vertex, opt.spec.approach_distance);
    Trajectory t = run_primitive(o.field, opt.spec, start, {src, snk});
    bool complete = !t.error && !t.empty() && t.samples.back().phase == Phase::done &&
                    count_onsets(t, Phase::lift) == opt.spec.cycles;
    if (!complete) ++out.incomplete;
    if (log)
      *log << "instance " << i << ": " << t.size() << " samples" << (complete ? "" : " (incomplete)")
           << (t.error ? " error: " + *t.error : "") << "\n";
    dof.push_back(dof_frames());
    cart.push_back(model_frames(body_fixed(BaselineKind::cartesian, src, snk)));
    cyl.push_back(model_frames(body_fixed(BaselineKind::cylindrical, src, snk)));
    sph.push_back(model_frames(body_fixed(BaselineKind::spherical, src, snk)));
    double h = *o.cloud.mean_spacing_h;
    for (std::size_t k = 0; k < opt.frame_counts.size(); ++k) {
      std::vector<SampledFrame> fr;
      for (std::size_t idx : sites[k]) fr.push_back({o.cloud.points[idx], o.surface.frames.frames[idx]});
      near[k].push_back(model_frames(sampled_frames_model(BaselineKind::multi_frame_nearest, fr)));
      soft[k].push_back(model_frames(sampled_frames_model(BaselineKind::multi_frame_softmax, fr, opt.temperature_h * h)));
    }
    out.trajectories.push_back(std::move(t));
    out.params.push_back(d.params);
  }
  double delta = opt.spec.delta;
  out.dof = action_stats(out.trajectories, delta, dof);
  out.cartesian = action_stats(out.trajectories, delta, cart);
  out.cylindrical = action_stats(out.trajectories, delta, cyl);
  out.spherical = action_stats(out.trajectories, delta, sph);
  for (std::size_t k = 0; k < opt.frame_counts.size(); ++k)
    out.multi.push_back({opt.frame_counts[k], action_stats(out.trajectories, delta, near[k]).average_std,
                         action_stats(out.trajectories, delta, soft[k]).average_std});
  out.seconds = seconds_since(t0);
  return out;
}

// Non-increasing within a relative slack.
inline bool non_increasing(const std::vector<double>& v, double slack) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] * (1 + slack)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Robustness of geodesic shooting to input noise.

enum class NoiseType { topological, geometric, keypoint };

inline const char* noise_name(NoiseType n) {
  static constexpr const char* names[] = {"topological", "geometric", "keypoint"};
  return names[static_cast<int>(n)];
}

inline NoiseType parse_noise(const std::string& s) {
  for (int i = 0; i < 3; ++i)
    if (s == noise_name(static_cast<NoiseType>(i))) return static_cast<NoiseType>(i);
  throw Error(ErrorKind::parameter, "unknown noise type '" + s + "'");
}

struct RobustnessOptions {
  std::vector<double> taus{10, 100, 1000};
  int trials = 20;
  std::uint64_t seed = 2000;
  std::optional<double> sigma;  // default per noise type
  double reference_tau = 1000.0;
  int steps = 400;
  double delta = 0.002;
  double offset = 0.01;
  int max_redraws = 100;
  WosParams wos;
  double spacing = 0.003;
};

struct RobustnessRow {
  double tau = 0;
  std::vector<double> rmse;
  double mean = 0, stddev = 0;
  int errors = 0;  // shots that aborted (partial trajectory scored)
};

struct RobustnessResult {
  NoiseType noise = NoiseType::geometric;
  double sigma = 0;
  std::vector<RobustnessRow> rows;
  Trajectory reference;
  int redraws = 0;
  double seconds = 0;

  std::vector<double> means() const {
    std::vector<double> m;
    for (const auto& r : rows) m.push_back(r.mean);
    return m;
  }
};

inline RobustnessResult robustness_study(NoiseType noise, const RobustnessOptions& opt, std::ostream* log = nullptr) {
  auto t0 = std::chrono::steady_clock::now();
  TaskObject task = banana_task(opt.spacing);
  RobustnessResult out;
  out.noise = noise;
  out.sigma = opt.sigma ? *opt.sigma : (noise == NoiseType::keypoint ? 0.020 : 0.003);
  Vec3 start = offset_point(task.cloud, task.start_vertex, opt.offset);
  auto shoot = [&](const PointCloud& c, const KeypointSet& kp, double tau,
                   std::shared_ptr<const LaplacianPair> lap) {
    ObjectFieldOptions fo;
    fo.tau_raw = tau;
    fo.wos = opt.wos;
    fo.laplacian = std::move(lap);
    ObjectField o = build_object_field(c, kp, fo);
    return geodesic_shoot(o.field, start, opt.steps, opt.delta, {o.source_position(), o.sink_position()});
  };
  out.reference = shoot(task.cloud, task.keypoints, opt.reference_tau, nullptr);
  require(!out.reference.error, ErrorKind::field, "reference shot failed: " + out.reference.error.value_or(""));
  for (double tau : opt.taus) out.rows.push_back({tau, {}, 0, 0, 0});
  for (int trial = 0; trial < opt.trials; ++trial) {
    PointCloud cloud = task.cloud;
    KeypointSet kp = task.keypoints;
    for (int draw = 0;; ++draw) {
      std::uint64_t s = hash_combine(opt.seed, hash_combine(static_cast<std::uint64_t>(trial), draw));
      try {
        if (noise == NoiseType::topological) {
          NoisyCloud n = topological_noise(task.cloud, task.keypoints, s);
          cloud = std::move(n.cloud);
          kp = n.keypoints;
        } else if (noise == NoiseType::geometric) {
          cloud = geometric_noise(task.cloud, out.sigma, s);
        } else {
          kp = keypoint_noise(task.keypoints, task.cloud, out.sigma, s);
        }
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::keypoint_loss || draw + 1 >= opt.max_redraws) throw;
        ++out.redraws;
      }
    }
    auto lap = std::make_shared<const LaplacianPair>(build_laplacian(cloud));
    for (auto& row : out.rows) {
      Trajectory t = shoot(cloud, kp, row.tau, lap);
      if (t.error) ++row.errors;
      row.rmse.push_back(t.empty() ? std::numeric_limits<double>::infinity() : rmse(t, out.reference));
    }
    if (log) {
      *log << noise_name(noise) << " trial " << trial << ":";
      for (const auto& row : out.rows) *log << " " << row.rmse.back();
      *log << "\n";
    }
  }
  for (auto& row : out.rows) {
    double n = static_cast<double>(row.rmse.size());
    for (double r : row.rmse) row.mean += r / n;
    for (double r : row.rmse) row.stddev += (r - row.mean) * (r - row.mean) / n;
    row.stddev = std::sqrt(row.stddev);
  }
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------
// Field smoothness on a workspace grid through the critter's symmetry plane.

struct SmoothnessOptions {
  double spacing = 0.004;       // cloud sampling
  double grid_step = 0.005;
  double margin = 0.02;
  double tau_raw = 1000.0;
  WosParams wos;
  // Workspace comparison: grid cells whose surface distance lies in the band.
  double band_min = 0.02, band_max = 0.10;
  double band_step = 0.01;
};

struct GridSpec {
  Vec3 origin = Vec3::Zero();
  int nx = 0, nz = 0;
  double step = 0;
  std::vector<Vec3> points() const {
    std::vector<Vec3> p;
    for (int j = 0; j < nz; ++j)
      for (int i = 0; i < nx; ++i) p.push_back(origin + Vec3(i * step, 0, j * step));
    return p;
  }
};

inline GridSpec xz_grid(const PointCloud& c, double step, double margin) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& p : c.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  GridSpec g;
  g.step = step;
  g.origin = Vec3(lo.x() - margin, 0, lo.z() - margin);
  g.nx = static_cast<int>(std::floor((hi.x() - lo.x() + 2 * margin) / step)) + 1;
  g.nz = static_cast<int>(std::floor((hi.z() - lo.z() + 2 * margin) / step)) + 1;
  return g;
}

inline FrameGrid query_grid(const WorkspaceField& f, const GridSpec& g) {
  FrameGrid out{g.nx, g.nz, {}, {}};
  for (const auto& r : query_frames_batch(f, g.points())) out.frames.push_back(r.rotation);
  return out;
}

// Cells outside [lo, hi] surface distance are marked invalid and left unqueried.
inline FrameGrid query_band(const WorkspaceField& f, const GridSpec& g, double lo, double hi) {
  std::vector<Vec3> pts = g.points(), inside;
  FrameGrid out{g.nx, g.nz, std::vector<Mat3>(pts.size(), Mat3::Identity()), std::vector<char>(pts.size(), 0)};
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double d = f.scene().closest_point(pts[i]).distance;
    if (d >= lo && d <= hi) {
      out.valid[i] = 1;
      ids.push_back(i);
      inside.push_back(pts[i]);
    }
  }
  auto res = query_frames_batch(f, inside);
  for (std::size_t k = 0; k < ids.size(); ++k) out.frames[ids[k]] = res[k].rotation;
  return out;
}

inline FrameGrid model_grid(const BaselineFrameModel& m, const GridSpec& g) {
  FrameGrid out{g.nx, g.nz, {}, {}};
  for (const auto& p : g.points()) out.frames.push_back(baseline_frame(m, p));
  return out;
}

// Flagged vertices copy the frame of the nearest unflagged vertex.
inline SurfaceFrameField fill_nearest(const PointCloud& c, SurfaceFrameField f) {
  std::vector<Vec3> pts;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!f.degenerate[i]) {
      pts.push_back(c.points[i]);
      ids.push_back(i);
    }
  require(!pts.empty(), ErrorKind::field, "every vertex of the frame field is degenerate");
  if (pts.size() == c.size()) return f;
  KdTree t(pts);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (f.degenerate[i]) f.frames[i] = f.frames[ids[t.nearest(c.points[i]).index]];
  return f;
}

// Oriented keypoints on the critter's back (front and rear) and belly; z along the
// surface normal, x pointing toward the rear.
inline KeypointSet critter_oriented_keypoints(const PointCloud& c) {
  shapes::Tube tube = shapes::critter_tube();
  KdTree t(c.points);
  KeypointSet kp;
  std::size_t front = t.nearest(tube.at(0.75, 0.0)).index;
  std::size_t rear = t.nearest(tube.at(0.25, 0.0)).index;
  std::size_t belly = t.nearest(tube.at(0.5, pi)).index;
  kp.sources = {front, belly};
  kp.sinks = {rear};
  auto frame_at = [&](std::size_t v) {
    Vec3 n = c.normals[v];
    Vec3 x = -Vec3::UnitX() - (-Vec3::UnitX()).dot(n) * n;
    x.normalize();
    return quat_from_matrix(frame_from_columns(x, n.cross(x), n));
  };
  kp.orientations = {frame_at(front), frame_at(belly), frame_at(rear)};
  return kp;
}

struct SmoothnessResult {
  DeviationStats orientation, svd, z_fixed;  // in-plane angles on the symmetry plane
  DeviationStats workspace, nearest;         // 3D neighbouring x-direction angles
  GridSpec grid, band_grid;
  double seconds = 0;
};

inline SmoothnessResult smoothness_study(const SmoothnessOptions& opt) {
  auto t0 = std::chrono::steady_clock::now();
  PointCloud c = shapes::critter(opt.spacing);
  auto lap = std::make_shared<const LaplacianPair>(build_laplacian(c));
  SurfaceDiffuser diff(lap);
  SmoothnessResult out;
  out.grid = xz_grid(c, opt.grid_step, opt.margin);
  KeypointSet okp = critter_oriented_keypoints(c);
  auto grid_of = [&](const SurfaceFrameField& frames) {
    WorkspaceField f(opt.wos);
    f.add_cloud(c, fill_nearest(c, frames));
    return query_grid(f, out.grid);
  };
  auto planar = [&](const FrameGrid& g) { return angular_deviation_stats(g, Vec3::UnitY(), Vec3::UnitX()); };
  out.orientation = planar(grid_of(diffuse_orientations(diff, okp, opt.tau_raw).field));
  out.svd = planar(grid_of(orthonormalized_vector_diffusion(diff, okp, opt.tau_raw, Orthonormalization::svd).field));
  out.z_fixed =
      planar(grid_of(orthonormalized_vector_diffusion(diff, okp, opt.tau_raw, Orthonormalization::z_fixed).field));

  shapes::Tube tube = shapes::critter_tube();
  KdTree t(c.points);
  KeypointSet kp;
  kp.sources = {t.nearest(tube.axis(1.0)).index};
  kp.sinks = {t.nearest(tube.axis(0.0)).index};
  ObjectFieldOptions fo;
  fo.tau_raw = opt.tau_raw;
  fo.wos = opt.wos;
  fo.laplacian = lap;
  ObjectField o = build_object_field(c, kp, fo);
  out.band_grid = xz_grid(c, opt.band_step, opt.band_max);
  FrameGrid ws = query_band(o.field, out.band_grid, opt.band_min, opt.band_max);
  FrameGrid np = model_grid(nearest_projection_model(o.cloud, o.surface.frames), out.band_grid);
  np.valid = ws.valid;
  out.workspace = angular_deviation_stats(ws);
  out.nearest = angular_deviation_stats(np);
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------
// Antipodal keypoints on deformed bananas against tracked tip vertices.

struct KeypointStudyOptions {
  int instances = 50;
  std::uint64_t seed = 1000;
  double spacing = 0.003;
  double tolerance_spacings = 10.0;
  double tau_raw = 1000.0;
};

struct KeypointStudy {
  int hits = 0;
  int confident = 0;
  std::vector<double> errors;  // worse end, metres
  double seconds = 0;
};

inline KeypointStudy keypoint_study(const KeypointStudyOptions& opt) {
  auto t0 = std::chrono::steady_clock::now();
  PointCloud base = shapes::banana(opt.spacing);
  shapes::Tube tube = shapes::banana_tube();
  KdTree tree(base.points);
  std::size_t ta = tree.nearest(tube.axis(0)).index, tb = tree.nearest(tube.axis(1)).index;
  KeypointStudy out;
  for (int i = 0; i < opt.instances; ++i) {
    Deformed d = random_deform(base, opt.seed + static_cast<std::uint64_t>(i));
    AntipodalOptions ao;
    ao.tau_raw = opt.tau_raw;
    AntipodalResult r = extract_antipodal(d.cloud, build_laplacian(d.cloud), ao);
    const auto& p = d.cloud.points;
    Vec3 a = p[d.vertex_map[ta]], b = p[d.vertex_map[tb]];
    Vec3 x = p[r.keypoints.sources[0]], y = p[r.keypoints.sinks[0]];
    double e = std::min(std::max((x - a).norm(), (y - b).norm()), std::max((x - b).norm(), (y - a).norm()));
    out.errors.push_back(e);
    out.hits += e <= opt.tolerance_spacings * opt.spacing;
    out.confident += !r.keypoints.low_confidence;
  }
  out.seconds = seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------
// Timings on a ~12k-point critter.

struct PerformanceOptions {
  std::size_t target_points = 12000;
  double tau_raw = 1000.0;
  int queries = 16;            // off-surface query points, timings averaged
  double query_offset = 0.02;
  int n_samples = 256;
  unsigned parallel_threads = 0;  // 0: hardware concurrency
  int repeats = 3;                // best-of for build, factorize and solve
};

struct PerformanceReport {
  std::size_t points = 0;
  unsigned threads = 1;
  double laplacian_s = 0, factorize_s = 0, solve_s = 0;
  double query_single_s = 0, query_parallel_s = 0;  // mean per query
};

inline PerformanceReport performance_study(const PerformanceOptions& opt) {
  PerformanceReport r;
  shapes::Tube tube = shapes::critter_tube();
  double spacing = 0.004;
  PointCloud c = shapes::sample_tube(tube, spacing);
  spacing *= std::sqrt(static_cast<double>(c.size()) / static_cast<double>(opt.target_points));
  c = shapes::sample_tube(tube, spacing);
  r.points = c.size();

  auto best = [&](auto&& fn) {
    double b = std::numeric_limits<double>::infinity();
    for (int i = 0; i < std::max(1, opt.repeats); ++i) {
      auto t0 = std::chrono::steady_clock::now();
      fn();
      b = std::min(b, seconds_since(t0));
    }
    return b;
  };
  std::shared_ptr<const LaplacianPair> lap;
  r.laplacian_s = best([&] { lap = std::make_shared<const LaplacianPair>(build_laplacian(c, {16, 1})); });
  double tau = normalize_diffusion_time(opt.tau_raw, lap->h);
  SparseMatrix a = SparseMatrix(lap->M.asDiagonal()) - tau * lap->C;
  std::optional<Factorization> fac;
  r.factorize_s = best([&] { fac.emplace(Factorization::factorize_spd(a, {}, tau)); });
  KdTree t(c.points);
  KeypointSet kp;
  kp.sources = {t.nearest(tube.axis(1.0)).index};
  kp.sinks = {t.nearest(tube.axis(0.0)).index};
  VecX u0 = VecX::Zero(static_cast<Eigen::Index>(c.size()));
  u0(static_cast<Eigen::Index>(kp.sources[0])) = 1;
  u0(static_cast<Eigen::Index>(kp.sinks[0])) = -1;
  VecX rhs = lap->M.asDiagonal() * u0;
  r.solve_s = best([&] { fac->solve(MatX(rhs)); });

  ObjectFieldOptions fo;
  fo.tau_raw = opt.tau_raw;
  fo.laplacian = lap;
  fo.wos.n_samples = opt.n_samples;
  ObjectField o = build_object_field(c, kp, fo);
  std::vector<Vec3> qs;
  for (int i = 0; i < opt.queries; ++i) {
    std::size_t v = (static_cast<std::size_t>(i) * 7919) % c.size();
    qs.push_back(c.points[v] + opt.query_offset * c.normals[v]);
  }
  auto timed = [&](unsigned threads) {
    WosParams p = o.field.params();
    p.threads = threads;
    o.field.set_params(p);
    auto t0 = std::chrono::steady_clock::now();
    for (const auto& q : qs) query_frame(o.field, q);
    return seconds_since(t0) / static_cast<double>(qs.size());
  };
  r.threads = opt.parallel_threads ? opt.parallel_threads : std::max(1u, std::thread::hardware_concurrency());
  r.query_single_s = timed(1);
  r.query_parallel_s = timed(r.threads);
  return r;
}

}  // namespace dof::experiments
