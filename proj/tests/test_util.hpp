#pragma once

#include "dof/common.hpp"
#include "dof/point_cloud.hpp"

#include <gtest/gtest.h>

#include <random>

namespace dof::test {

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

inline Mat3 random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

inline double angle_deg(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / pi;
}

}  // namespace dof::test

namespace dof::test {

// Maximiser of q^T M q over unit quaternions by random search: best of
// `candidates` uniform samples, then shrinking random perturbations.
inline Vec4 random_search_max(const Eigen::Matrix4d& m, std::uint64_t seed, int candidates = 1000000) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  auto f = [&](const Vec4& q) { return q.dot(m * q); };
  Vec4 best(1, 0, 0, 0);
  double best_v = -1;
  for (int c = 0; c < candidates; ++c) {
    Vec4 q = Vec4(g(rng), g(rng), g(rng), g(rng)).normalized();
    double v = f(q);
    if (v > best_v) {
      best_v = v;
      best = q;
    }
  }
  for (double step = 0.05; step > 1e-7; step *= 0.7)
    for (int it = 0; it < 200; ++it) {
      Vec4 q = (best + step * Vec4(g(rng), g(rng), g(rng), g(rng))).normalized();
      double v = f(q);
      if (v > best_v) {
        best_v = v;
        best = q;
      }
    }
  return best;
}

}  // namespace dof::test
