#pragma once

#include "dof/common.hpp"
#include "dof/kdtree.hpp"

#include <Eigen/Eigenvalues>

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string_view>
#include <tuple>

namespace dof {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one unit normal per point
  std::optional<double> mean_spacing_h;

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }
  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points) c += p;
    return points.empty() ? c : Vec3(c / static_cast<double>(points.size()));
  }
};

inline std::uint64_t fingerprint(const PointCloud& c) {
  std::uint64_t h = fnv1a(c.points.data(), c.points.size() * sizeof(Vec3));
  if (c.has_normals()) h = fnv1a(c.normals.data(), c.normals.size() * sizeof(Vec3), h);
  return h;
}

inline void validate(const PointCloud& c) {
  for (std::size_t i = 0; i < c.points.size(); ++i)
    require(c.points[i].allFinite(), ErrorKind::format, "non-finite coordinate at point " + std::to_string(i));
  if (!c.normals.empty()) {
    require(c.normals.size() == c.points.size(), ErrorKind::shape, "normal count differs from point count");
    for (std::size_t i = 0; i < c.normals.size(); ++i)
      require(std::abs(c.normals[i].norm() - 1.0) < 1e-6, ErrorKind::format,
              "normal " + std::to_string(i) + " is not unit length");
  }
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0;
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw FormatError(line, "cannot parse number '" + std::string(tok) + "'");
  if (!std::isfinite(v)) throw FormatError(line, "non-finite value '" + std::string(tok) + "'");
  return v;
}

inline void finish_normals(PointCloud& c, std::size_t line) {
  for (auto& n : c.normals) {
    double len = n.norm();
    if (len < 1e-12) throw FormatError(line, "zero-length normal");
    n /= len;
  }
}

inline PointCloud parse_xyz(std::istream& in) {
  PointCloud c;
  std::string s;
  std::size_t line = 0;
  int columns = -1;
  while (std::getline(in, s)) {
    ++line;
    auto tok = split_ws(s);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok.size() != 3 && tok.size() != 6) throw FormatError(line, "expected 3 or 6 columns");
    if (columns < 0) columns = static_cast<int>(tok.size());
    if (static_cast<int>(tok.size()) != columns) throw FormatError(line, "inconsistent column count");
    c.points.emplace_back(parse_double(tok[0], line), parse_double(tok[1], line), parse_double(tok[2], line));
    if (columns == 6)
      c.normals.emplace_back(parse_double(tok[3], line), parse_double(tok[4], line), parse_double(tok[5], line));
  }
  finish_normals(c, line);
  return c;
}

inline PointCloud parse_ply_ascii(std::istream& in) {
  std::string s;
  std::size_t line = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, s)) return false;
    ++line;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return true;
  };
  if (!next() || s != "ply") throw FormatError(line, "missing ply magic");
  std::size_t vertex_count = 0;
  bool in_vertex = false, seen_vertex = false, ascii = false;
  std::vector<std::string> props;
  std::vector<std::pair<std::size_t, std::size_t>> later;  // (count, property count) of elements after vertex
  std::vector<std::pair<std::size_t, std::size_t>> before;
  while (true) {
    if (!next()) throw FormatError(line, "unterminated header");
    auto tok = split_ws(s);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") throw FormatError(line, "only ascii ply is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw FormatError(line, "malformed element line");
      auto cnt = static_cast<std::size_t>(parse_double(tok[2], line));
      in_vertex = tok[1] == "vertex";
      if (in_vertex) {
        vertex_count = cnt;
        seen_vertex = true;
      } else {
        (seen_vertex ? later : before).push_back({cnt, 0});
      }
    } else if (tok[0] == "property") {
      if (tok.size() < 3) throw FormatError(line, "malformed property line");
      if (in_vertex) {
        if (tok[1] == "list") throw FormatError(line, "list property on vertex element");
        props.emplace_back(tok.back());
      } else {
        auto& list = seen_vertex ? later : before;
        if (!list.empty()) ++list.back().second;
      }
    }
  }
  if (!ascii) throw FormatError(line, "missing format line");
  if (!before.empty()) throw FormatError(line, "vertex element must come first");
  auto find = [&](const char* name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  int ix = find("x"), iy = find("y"), iz = find("z");
  int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError(line, "vertex element lacks x/y/z");
  bool normals = inx >= 0 && iny >= 0 && inz >= 0;
  PointCloud c;
  c.points.reserve(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!next()) throw FormatError(line, "unexpected end of vertex data");
    auto tok = split_ws(s);
    if (tok.size() != props.size()) throw FormatError(line, "vertex row has wrong column count");
    c.points.emplace_back(parse_double(tok[ix], line), parse_double(tok[iy], line), parse_double(tok[iz], line));
    if (normals)
      c.normals.emplace_back(parse_double(tok[inx], line), parse_double(tok[iny], line),
                             parse_double(tok[inz], line));
  }
  finish_normals(c, line);
  return c;
}

}  // namespace detail

enum class CloudFormat { xyz, ply_ascii };

inline CloudFormat guess_format(const std::string& path) {
  auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".ply") return CloudFormat::ply_ascii;
  return CloudFormat::xyz;
}

inline PointCloud load_point_cloud(std::istream& in, CloudFormat format) {
  PointCloud c = format == CloudFormat::xyz ? detail::parse_xyz(in) : detail::parse_ply_ascii(in);
  require(c.size() >= 4, ErrorKind::size, "point cloud needs at least 4 points, got " + std::to_string(c.size()));
  return c;
}

inline PointCloud load_point_cloud(const std::string& path, std::optional<CloudFormat> format = std::nullopt) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path);
  return load_point_cloud(in, format.value_or(guess_format(path)));
}

inline void write_xyz(std::ostream& out, const PointCloud& c) {
  out.precision(17);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3& p = c.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (c.has_normals()) out << ' ' << c.normals[i].x() << ' ' << c.normals[i].y() << ' ' << c.normals[i].z();
    out << '\n';
  }
}

inline void save_xyz(const std::string& path, const PointCloud& c) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path);
  write_xyz(out, c);
}

inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  require(voxel > 0 && std::isfinite(voxel), ErrorKind::parameter, "voxel size must be positive");
  require(!cloud.points.empty(), ErrorKind::size, "empty cloud");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  struct Bin {
    Vec3 sum = Vec3::Zero();
    Vec3 nsum = Vec3::Zero();
    std::size_t count = 0;
  };
  std::map<Key, Bin> bins;
  bool normals = cloud.has_normals();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    Key k{static_cast<std::int64_t>(std::floor(p.x() / voxel)), static_cast<std::int64_t>(std::floor(p.y() / voxel)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel))};
    Bin& b = bins[k];
    b.sum += p;
    if (normals) b.nsum += cloud.normals[i];
    ++b.count;
  }
  PointCloud out;
  out.points.reserve(bins.size());
  for (auto& [k, b] : bins) {
    out.points.push_back(b.count == 1 ? b.sum : Vec3(b.sum / static_cast<double>(b.count)));
    if (normals) {
      double len = b.nsum.norm();
      out.normals.push_back(len > 1e-12 ? Vec3(b.nsum / len) : Vec3(0, 0, 1));
    }
  }
  return out;
}

struct NormalEstimate {
  PointCloud cloud;
  std::vector<std::size_t> degenerate;
};

// PCA normals over k nearest neighbours (including the point), oriented
// toward the viewpoint.
inline NormalEstimate estimate_normals(const PointCloud& cloud, int k, const Vec3& viewpoint = Vec3::Zero(),
                                       unsigned threads = 0) {
  require(k >= 3, ErrorKind::parameter, "k must be at least 3");
  require(static_cast<std::size_t>(k) < cloud.size(), ErrorKind::parameter, "k must be below the point count");
  KdTree tree(cloud.points);
  NormalEstimate out{cloud, {}};
  out.cloud.normals.assign(cloud.size(), Vec3::UnitZ());
  std::vector<char> flag(cloud.size(), 0);
  parallel_for(
      cloud.size(),
      [&](std::size_t i) {
        auto nb = tree.knn(cloud.points[i], static_cast<std::size_t>(k));
        Vec3 mean = Vec3::Zero();
        for (const auto& n : nb) mean += cloud.points[n.index];
        mean /= static_cast<double>(nb.size());
        Mat3 cov = Mat3::Zero();
        for (const auto& n : nb) {
          Vec3 d = cloud.points[n.index] - mean;
          cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
        Vec3 ev = es.eigenvalues();
        Vec3 n = es.eigenvectors().col(0).normalized();
        if (!(ev(1) > 1e-10 * std::max(ev(2), 1e-300))) flag[i] = 1;
        double s = n.dot(viewpoint - cloud.points[i]);
        if (s < 0) n = -n;
        out.cloud.normals[i] = n;
      },
      threads);
  for (std::size_t i = 0; i < flag.size(); ++i)
    if (flag[i]) out.degenerate.push_back(i);
  return out;
}

// h = mean over points of the mean distance to the k nearest other points.
inline double compute_mean_spacing(const PointCloud& cloud, int k = 6) {
  require(k >= 1, ErrorKind::parameter, "k must be at least 1");
  require(cloud.size() > static_cast<std::size_t>(k), ErrorKind::size, "too few points for spacing");
  KdTree tree(cloud.points);
  double total = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto nb = tree.knn(cloud.points[i], static_cast<std::size_t>(k) + 1);
    double s = 0;
    int used = 0;
    // Drop the query point itself; duplicates of it still count as neighbours.
    bool self_dropped = false;
    for (const auto& n : nb) {
      if (!self_dropped && n.index == i) {
        self_dropped = true;
        continue;
      }
      if (used == k) break;
      s += std::sqrt(n.dist2);
      ++used;
    }
    total += s / used;
  }
  return total / static_cast<double>(cloud.size());
}

inline double mean_spacing(PointCloud& cloud, int k = 6) {
  double h = compute_mean_spacing(cloud, k);
  cloud.mean_spacing_h = h;
  return h;
}

inline double spacing_of(const PointCloud& cloud) {
  return cloud.mean_spacing_h ? *cloud.mean_spacing_h : compute_mean_spacing(cloud);
}

}  // namespace dof
