#pragma once

#include "dof/point_cloud.hpp"
#include "dof/sparse_linear.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cstring>
#include <fstream>

namespace dof {

struct LaplacianDiagnostics {
  std::vector<std::size_t> fallback_vertices;  // Gaussian-weight stencil used
  std::vector<std::size_t> open_fan_vertices;  // local triangulation did not close
  std::size_t clamped_weights = 0;             // negative symmetric weights set to zero
};

// Weak Laplacian C (negative semidefinite, zero row sums) and lumped mass M.
struct LaplacianPair {
  SparseMatrix C;
  VecX M;
  std::uint64_t cloud_fingerprint = 0;
  double h = 0;
  LaplacianDiagnostics diagnostics;

  Eigen::Index size() const { return M.size(); }
};

struct LaplacianOptions {
  int k = 16;
  unsigned threads = 0;
};

namespace detail {

using Vec2 = Eigen::Vector2d;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct LocalFan {
  std::vector<std::array<int, 2>> tris;  // (a, b) with the centre at the origin, counter-clockwise
  bool closed = false;
};

// Delaunay triangles incident to the origin among projected neighbours, by
// gift wrapping: the third vertex of the triangle on an edge's side is the one
// whose circumcentre lies least far along that side.
inline LocalFan delaunay_fan(const std::vector<Vec2>& t) {
  LocalFan fan;
  int m = static_cast<int>(t.size());
  if (m < 2) return fan;
  double scale = 0;
  int start = 0;
  for (int j = 0; j < m; ++j) {
    scale = std::max(scale, t[j].norm());
    if (t[j].squaredNorm() < t[start].squaredNorm()) start = j;
  }
  double tol = 1e-9 * scale;
  auto next = [&](int cur, bool ccw) {
    const Vec2& c = t[cur];
    double cl = c.norm();
    Vec2 side = ccw ? Vec2(-c.y(), c.x()) / cl : Vec2(c.y(), -c.x()) / cl;
    int best = -1;
    double best_s = 0, best_ang = 0;
    for (int q = 0; q < m; ++q) {
      if (q == cur) continue;
      double cr = cross2(c, t[q]);
      double lim = 1e-10 * cl * t[q].norm();
      if (ccw ? cr <= lim : cr >= -lim) continue;
      double d = 2.0 * cr;
      double c2 = c.squaredNorm(), q2 = t[q].squaredNorm();
      Vec2 cc((t[q].y() * c2 - c.y() * q2) / d, (c.x() * q2 - t[q].x() * c2) / d);
      double s = cc.dot(side);
      double ang = std::atan2(std::abs(cr), c.dot(t[q]));
      if (best < 0 || s < best_s - tol || (std::abs(s - best_s) <= tol && ang < best_ang)) {
        best = q;
        best_s = s;
        best_ang = ang;
      }
    }
    return best;
  };
  std::vector<char> seen(m, 0);
  seen[start] = 1;
  int cur = start;
  for (int it = 0; it < m; ++it) {
    int q = next(cur, true);
    if (q < 0) break;
    fan.tris.push_back({cur, q});
    if (q == start) {
      fan.closed = true;
      return fan;
    }
    if (seen[q]) return fan;
    seen[q] = 1;
    cur = q;
  }
  cur = start;
  for (int it = 0; it < m; ++it) {
    int q = next(cur, false);
    if (q < 0 || seen[q]) {
      if (q >= 0) fan.tris.push_back({q, cur});
      break;
    }
    fan.tris.push_back({q, cur});
    seen[q] = 1;
    cur = q;
  }
  return fan;
}

inline double cot_at(const Vec2& apex, const Vec2& p, const Vec2& q) {
  Vec2 u = p - apex, v = q - apex;
  return u.dot(v) / std::abs(cross2(u, v));
}

struct VertexStencil {
  std::vector<std::pair<std::size_t, double>> weights;
  double mass = 0;
  bool fallback = false;
  bool open = false;
  bool isolated = false;
};

inline VertexStencil vertex_stencil(const PointCloud& cloud, const KdTree& tree, std::size_t i, int k, double h) {
  VertexStencil st;
  const Vec3& p = cloud.points[i];
  auto nb = tree.knn(p, static_cast<std::size_t>(k) + 1);
  std::vector<std::size_t> ids;
  std::vector<double> dist;
  for (const auto& n : nb) {
    if (n.index == i) continue;
    if (std::sqrt(n.dist2) <= 1e-9 * h) continue;  // coincident points carry no geometry
    ids.push_back(n.index);
    dist.push_back(std::sqrt(n.dist2));
  }
  if (ids.empty()) {
    st.isolated = true;
    return st;
  }
  const Vec3& n = cloud.normals[i];
  bool normal_ok = n.allFinite() && std::abs(n.norm() - 1.0) < 1e-6;
  if (normal_ok) {
    Vec3 e1 = any_perpendicular(n), e2 = n.cross(e1);
    std::vector<Vec2> t(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      Vec3 d = cloud.points[ids[j]] - p;
      t[j] = Vec2(d.dot(e1), d.dot(e2));
    }
    LocalFan fan = delaunay_fan(t);
    if (!fan.tris.empty()) {
      std::vector<double> w(ids.size(), 0.0);
      double area = 0;
      Vec2 o = Vec2::Zero();
      for (auto [a, b] : fan.tris) {
        area += 0.5 * std::abs(cross2(t[a], t[b]));
        w[b] += 0.5 * cot_at(t[a], o, t[b]);
        w[a] += 0.5 * cot_at(t[b], o, t[a]);
      }
      double voronoi = 0;
      for (std::size_t j = 0; j < ids.size(); ++j) voronoi += 0.25 * w[j] * t[j].squaredNorm();
      st.open = !fan.closed;
      st.mass = (fan.closed && voronoi > 0) ? voronoi : area / 3.0;
      for (std::size_t j = 0; j < ids.size(); ++j)
        if (w[j] != 0.0) st.weights.emplace_back(ids[j], w[j]);
      if (st.mass > 0 && std::isfinite(st.mass)) return st;
      st.weights.clear();
    }
  }
  st.fallback = true;
  st.open = false;
  for (std::size_t j = 0; j < ids.size(); ++j) st.weights.emplace_back(ids[j], std::exp(-dist[j] * dist[j] / (h * h)));
  st.mass = h * h;
  return st;
}

}  // namespace detail

inline LaplacianPair build_laplacian(const PointCloud& cloud, const LaplacianOptions& opts = {}) {
  require(opts.k >= 6, ErrorKind::parameter, "Laplacian stencil needs k >= 6");
  require(cloud.size() >= 4, ErrorKind::size, "Laplacian needs at least 4 points");
  require(cloud.has_normals(), ErrorKind::parameter, "Laplacian needs normals");
  validate(cloud);
  double h = spacing_of(cloud);
  require(h > 0, ErrorKind::parameter, "mean spacing is zero");
  KdTree tree(cloud.points);
  std::size_t n = cloud.size();
  std::vector<detail::VertexStencil> stencils(n);
  parallel_for(
      n, [&](std::size_t i) { stencils[i] = detail::vertex_stencil(cloud, tree, i, opts.k, h); }, opts.threads);

  LaplacianPair lap;
  lap.h = h;
  lap.cloud_fingerprint = fingerprint(cloud);
  std::vector<std::size_t> isolated;
  std::vector<Triplet> trips;
  lap.M.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& st = stencils[i];
    if (st.isolated) isolated.push_back(i);
    if (st.fallback) lap.diagnostics.fallback_vertices.push_back(i);
    if (st.open) lap.diagnostics.open_fan_vertices.push_back(i);
    lap.M(static_cast<Eigen::Index>(i)) = st.mass;
    for (auto [j, w] : st.weights) {
      trips.push_back({static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j), 0.5 * w});
      trips.push_back({static_cast<std::ptrdiff_t>(j), static_cast<std::ptrdiff_t>(i), 0.5 * w});
    }
  }
  if (!isolated.empty()) throw ConnectivityError(isolated);

  SparseMatrix W = assemble(static_cast<std::ptrdiff_t>(n), trips);
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(W.nonZeros()) + n);
  VecX diag = VecX::Zero(static_cast<Eigen::Index>(n));
  for (int c = 0; c < W.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(W, c); it; ++it) {
      double w = it.value();
      if (w < 0) {
        ++lap.diagnostics.clamped_weights;
        continue;
      }
      out.push_back({it.row(), it.col(), w});
      diag(it.row()) -= w;
    }
  }
  lap.diagnostics.clamped_weights /= 2;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(i), diag(static_cast<Eigen::Index>(i))});
  lap.C = assemble(static_cast<std::ptrdiff_t>(n), out);
  return lap;
}

inline double dirichlet_energy(const LaplacianPair& lap, const VecX& u) {
  require(u.size() == lap.size(), ErrorKind::shape, "field size does not match Laplacian");
  return -u.dot(lap.C * u);
}

// Lowest eigenpairs of -C phi = lambda M phi by shifted subspace iteration.
inline VecX low_spectrum(const LaplacianPair& lap, int count, int iterations = 60, double shift = 1e-3) {
  Eigen::Index n = lap.size();
  SparseMatrix A = -lap.C;
  for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) += shift * lap.M(i);
  Factorization f = Factorization::factorize_spd(A);
  int b = std::min<int>(count + 3, static_cast<int>(n));
  CounterRng rng(12345);
  MatX X(n, b);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < b; ++j) X(i, j) = rng.uniform() - 0.5;
  VecX lambda;
  for (int it = 0; it < iterations; ++it) {
    MatX Y = f.solve(MatX(lap.M.asDiagonal() * X));
    MatX K = Y.transpose() * (-lap.C * Y);
    MatX B = Y.transpose() * lap.M.asDiagonal() * Y;
    K = 0.5 * (K + K.transpose());
    B = 0.5 * (B + B.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<MatX> es(K, B);
    lambda = es.eigenvalues();
    X = Y * es.eigenvectors();
  }
  return lambda.head(count);
}

namespace detail {
inline constexpr char lap_magic[8] = {'D', 'O', 'F', 'L', 'A', 'P', '\0', '\0'};
inline constexpr std::uint32_t lap_version = 1;
}  // namespace detail

// Binary cache: magic, version, n, h, fingerprint, nnz, (row, col, value)*, M.
inline void save_laplacian(const std::string& path, const LaplacianPair& lap) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path);
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(detail::lap_magic, 8);
  put(detail::lap_version);
  put(static_cast<std::uint64_t>(lap.size()));
  put(lap.h);
  put(lap.cloud_fingerprint);
  put(static_cast<std::uint64_t>(lap.C.nonZeros()));
  for (int c = 0; c < lap.C.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(lap.C, c); it; ++it) {
      put(static_cast<std::int32_t>(it.row()));
      put(static_cast<std::int32_t>(it.col()));
      put(it.value());
    }
  for (Eigen::Index i = 0; i < lap.size(); ++i) put(lap.M(i));
}

inline std::optional<LaplacianPair> load_laplacian(const std::string& path, std::uint64_t expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  auto get = [&](auto& v) { in.read(reinterpret_cast<char*>(&v), sizeof(v)); };
  char magic[8];
  in.read(magic, 8);
  std::uint32_t version = 0;
  get(version);
  if (!in || std::memcmp(magic, detail::lap_magic, 8) != 0 || version != detail::lap_version) return std::nullopt;
  std::uint64_t n = 0, nnz = 0;
  LaplacianPair lap;
  get(n);
  get(lap.h);
  get(lap.cloud_fingerprint);
  get(nnz);
  if (!in || lap.cloud_fingerprint != expected_fingerprint) return std::nullopt;
  std::vector<Triplet> trips(nnz);
  for (auto& t : trips) {
    std::int32_t r, c;
    get(r);
    get(c);
    get(t.value);
    t.row = r;
    t.col = c;
  }
  lap.M.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < lap.M.size(); ++i) get(lap.M(i));
  if (!in) return std::nullopt;
  lap.C = assemble(static_cast<std::ptrdiff_t>(n), trips);
  return lap;
}

}  // namespace dof
