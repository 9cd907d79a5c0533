#pragma once

#include "dof/point_cloud.hpp"

#include <random>

// Synthetic surface samplers used by tests, experiments and the CLI.
namespace dof::shapes {

inline PointCloud fibonacci_sphere(std::size_t n, double radius = 1.0, const Vec3& center = Vec3::Zero()) {
  PointCloud c;
  const double golden = pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden * static_cast<double>(i);
    Vec3 d(r * std::cos(phi), r * std::sin(phi), z);
    c.points.push_back(center + radius * d);
    c.normals.push_back(d);
  }
  return c;
}

// Upper half (z >= 0) of a Fibonacci sphere; its rim is the z = 0 circle.
inline PointCloud half_sphere(std::size_t n_full, double radius = 1.0) {
  PointCloud full = fibonacci_sphere(n_full, radius), c;
  for (std::size_t i = 0; i < full.size(); ++i)
    if (full.points[i].z() >= 0) {
      c.points.push_back(full.points[i]);
      c.normals.push_back(full.normals[i]);
    }
  return c;
}

// nx-by-ny grid in the z = 0 plane centred on the origin, normals +z.
inline PointCloud plane_grid(int nx, int ny, double spacing) {
  PointCloud c;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      c.points.emplace_back((i - 0.5 * (nx - 1)) * spacing, (j - 0.5 * (ny - 1)) * spacing, 0.0);
      c.normals.push_back(Vec3::UnitZ());
    }
  return c;
}

inline PointCloud line_points(int n, double spacing) {
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.emplace_back(i * spacing, 0.0, 0.0);
  return c;
}

// Surface swept by a closed cross-section along an axis curve; s in [0, 1],
// psi the angle around the axis. Radius must vanish at s = 0 and s = 1.
struct Tube {
  std::function<Vec3(double)> axis;
  std::function<double(double, double)> radius;
  Vec3 up = Vec3::UnitX();

  void frame(double s, Vec3& t, Vec3& n, Vec3& b) const {
    double e = 1e-5;
    double s0 = std::max(0.0, s - e), s1 = std::min(1.0, s + e);
    t = (axis(s1) - axis(s0)).normalized();
    n = (up - up.dot(t) * t).normalized();
    b = t.cross(n);
  }
  Vec3 at(double s, double psi) const {
    Vec3 t, n, b;
    frame(s, t, n, b);
    return axis(s) + radius(s, psi) * (std::cos(psi) * n + std::sin(psi) * b);
  }
  // Returns the area element and writes the outward normal.
  double element(double s, double psi, Vec3& normal) const {
    double es = 1e-6, ep = 1e-6;
    double sa = std::max(0.0, s - es), sb = std::min(1.0, s + es);
    Vec3 ds = (at(sb, psi) - at(sa, psi)) / (sb - sa);
    Vec3 dp = (at(s, psi + ep) - at(s, psi - ep)) / (2 * ep);
    Vec3 cr = ds.cross(dp);
    double a = cr.norm();
    Vec3 p = at(s, psi), c = axis(s);
    if (a > 1e-14) {
      normal = cr / a;
      if (normal.dot(p - c) < 0) normal = -normal;
    } else {
      Vec3 t, n, b;
      frame(s, t, n, b);
      normal = s < 0.5 ? Vec3(-t) : t;
    }
    return a;
  }
};

// Area-uniform random sampling followed by voxel downsampling at `spacing`.
inline PointCloud sample_tube(const Tube& tube, double spacing, std::uint64_t seed = 1, double oversample = 10.0) {
  const int gs = 256, gp = 64;
  double max_el = 0, area = 0;
  Vec3 nrm;
  for (int i = 0; i < gs; ++i)
    for (int j = 0; j < gp; ++j) {
      double el = tube.element((i + 0.5) / gs, 2 * pi * (j + 0.5) / gp, nrm);
      max_el = std::max(max_el, el);
      area += el / (gs * gp);
    }
  area *= 2 * pi;
  max_el *= 1.3;
  std::size_t target = static_cast<std::size_t>(oversample * area / (spacing * spacing));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PointCloud dense;
  dense.points.reserve(target);
  dense.normals.reserve(target);
  while (dense.points.size() < target) {
    double s = u01(rng), psi = 2 * pi * u01(rng);
    double el = tube.element(s, psi, nrm);
    if (u01(rng) * max_el > el) continue;
    dense.points.push_back(tube.at(s, psi));
    dense.normals.push_back(nrm);
  }
  return voxel_downsample(dense, spacing);
}

inline Tube ellipsoid_tube(double a, double b, double c) {
  Tube t;
  t.axis = [c](double s) { return Vec3(0, 0, -c + 2 * c * s); };
  t.radius = [a, b](double s, double psi) {
    double z = 2 * s - 1;
    double ring = std::sqrt(std::max(0.0, 1 - z * z));
    return ring * a * b / std::hypot(b * std::cos(psi), a * std::sin(psi));
  };
  t.up = Vec3::UnitX();
  return t;
}

// Body bulb below a smaller top bulb, smoothly blended; axis along +z with the
// stem at the top.
inline Tube pear_tube(double bottom = 0.035, double top = 0.022, double offset = 0.045) {
  double z0 = -bottom, z1 = offset + top;
  Tube t;
  t.axis = [z0, z1](double s) { return Vec3(0, 0, z0 + (z1 - z0) * s); };
  t.radius = [=](double s, double) {
    double z = z0 + (z1 - z0) * s;
    double r1 = std::sqrt(std::max(0.0, bottom * bottom - z * z));
    double r2 = std::sqrt(std::max(0.0, top * top - (z - offset) * (z - offset)));
    const double p = 3.0;
    return std::pow(std::pow(r1, p) + std::pow(r2, p), 1.0 / p);
  };
  t.up = Vec3::UnitX();
  return t;
}

// Curved, tapered tube in the xz-plane; s = 0 is the (thin) stem end.
inline Tube banana_tube(double bend_radius = 0.12, double half_angle = 0.7, double thickness = 0.018) {
  Tube t;
  t.axis = [=](double s) {
    double th = (2 * s - 1) * half_angle;
    return Vec3(bend_radius * std::sin(th), 0, bend_radius * (std::cos(th) - 1));
  };
  t.radius = [=](double s, double) {
    double x = 2 * s - 1;
    double taper = std::pow(std::max(0.0, 1 - x * x * x * x), 0.5);
    return thickness * taper * (0.7 + 0.3 * s);
  };
  t.up = Vec3::UnitY();
  return t;
}

// Quadruped-like body: elongated along x with a head bulge and non-circular section.
inline Tube critter_tube(double length = 0.2, double girth = 0.045) {
  Tube t;
  t.axis = [=](double s) { return Vec3(-0.5 * length + length * s, 0, 0.01 * std::sin(pi * s)); };
  t.radius = [=](double s, double psi) {
    double x = 2 * s - 1;
    double body = girth * std::sqrt(std::max(0.0, 1 - x * x));
    double head = 0.45 * girth * std::exp(-std::pow((s - 0.82) / 0.08, 2)) * std::sqrt(std::max(0.0, 1 - x * x));
    return (body + head) * (1 + 0.15 * std::cos(2 * psi));
  };
  t.up = Vec3::UnitZ();
  return t;
}

inline PointCloud ellipsoid(double a, double b, double c, double spacing, std::uint64_t seed = 1) {
  return sample_tube(ellipsoid_tube(a, b, c), spacing, seed);
}
inline PointCloud pear(double spacing = 0.003, std::uint64_t seed = 1) { return sample_tube(pear_tube(), spacing, seed); }
inline PointCloud banana(double spacing = 0.003, std::uint64_t seed = 1) {
  return sample_tube(banana_tube(), spacing, seed);
}
inline PointCloud critter(double spacing = 0.004, std::uint64_t seed = 1) {
  return sample_tube(critter_tube(), spacing, seed);
}

inline PointCloud random_blob(std::size_t n, std::uint64_t seed, double radius = 0.05) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  double a = 1 + 0.3 * u(rng), b = 1 + 0.3 * u(rng), c = 1 + 0.3 * u(rng);
  double wob = 0.15 * u(rng);
  PointCloud base = fibonacci_sphere(n, 1.0);
  PointCloud out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    Vec3 d = base.points[i];
    double r = radius * (1 + wob * d.x() * d.y());
    Vec3 p(r * a * d.x(), r * b * d.y(), r * c * d.z());
    out.points.push_back(p);
  }
  // Normals of the mapped sphere via the inverse-transpose of the local map.
  for (std::size_t i = 0; i < base.size(); ++i) {
    Vec3 d = base.points[i];
    auto f = [&](const Vec3& q) {
      Vec3 e = q.normalized();
      double r = radius * (1 + wob * e.x() * e.y());
      return Vec3(r * a * e.x(), r * b * e.y(), r * c * e.z());
    };
    Vec3 t1 = any_perpendicular(d), t2 = d.cross(t1);
    double e = 1e-6;
    Vec3 g1 = (f(d + e * t1) - f(d - e * t1)) / (2 * e);
    Vec3 g2 = (f(d + e * t2) - f(d - e * t2)) / (2 * e);
    Vec3 n = g1.cross(g2).normalized();
    if (n.dot(out.points[i]) < 0) n = -n;
    out.normals.push_back(n);
  }
  return out;
}

}  // namespace dof::shapes
