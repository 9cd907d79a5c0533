#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dof {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;  // quaternion stored (w, x, y, z)
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double pi = std::numbers::pi;

enum class ErrorKind {
  format,
  size,
  parameter,
  assembly,
  shape,
  keypoint_loss,
  cycle_count,
  io,
  definiteness,
  connectivity,
  ambiguity,
  field,
  degenerate,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::format: return "format";
    case ErrorKind::size: return "size";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::assembly: return "assembly";
    case ErrorKind::shape: return "shape";
    case ErrorKind::keypoint_loss: return "keypoint-loss";
    case ErrorKind::cycle_count: return "cycle-count";
    case ErrorKind::io: return "io";
    case ErrorKind::definiteness: return "definiteness";
    case ErrorKind::connectivity: return "connectivity";
    case ErrorKind::ambiguity: return "ambiguity";
    case ErrorKind::field: return "field";
    case ErrorKind::degenerate: return "degenerate";
  }
  return "unknown";
}

// Data problems map to exit code 2, numerical failures to 3.
inline bool is_numerical(ErrorKind k) {
  switch (k) {
    case ErrorKind::definiteness:
    case ErrorKind::connectivity:
    case ErrorKind::ambiguity:
    case ErrorKind::field:
    case ErrorKind::degenerate:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class FormatError : public Error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : Error(ErrorKind::format, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DefinitenessError : public Error {
 public:
  explicit DefinitenessError(std::ptrdiff_t pivot)
      : Error(ErrorKind::definiteness,
              "matrix not positive definite at pivot " + std::to_string(pivot)),
        pivot_(pivot) {}
  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

class ConnectivityError : public Error {
 public:
  explicit ConnectivityError(std::vector<std::size_t> vertices)
      : Error(ErrorKind::connectivity, describe(vertices)), vertices_(std::move(vertices)) {}
  const std::vector<std::size_t>& vertices() const noexcept { return vertices_; }

 private:
  static std::string describe(const std::vector<std::size_t>& v) {
    std::string s = "isolated vertices:";
    for (std::size_t i = 0; i < v.size() && i < 16; ++i) s += " " + std::to_string(v[i]);
    if (v.size() > 16) s += " ...";
    return s;
  }
  std::vector<std::size_t> vertices_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

// Static block partition over [0, n). Each index runs exactly once; callers
// write into preallocated slots so results never depend on the thread count.
inline unsigned default_threads() {
  unsigned t = std::thread::hardware_concurrency();
  return t == 0 ? 1 : t;
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    std::size_t b = t * chunk, e = std::min(n, b + chunk);
    pool.emplace_back([&, b, e, t] {
      try {
        for (std::size_t i = b; i < e; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// splitmix64 finalizer; used as a counter-based generator.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

// Stream addressed by a key; the n-th draw is a pure function of (key, n).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  std::uint64_t next() { return mix64(key_ ^ mix64(counter_++)); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  Vec3 unit_vector() {
    double z = 2.0 * uniform() - 1.0;
    double phi = 2.0 * pi * uniform();
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// FNV-1a over raw bytes, for fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL) {
  auto p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline Vec3 any_perpendicular(const Vec3& n) {
  Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(a).normalized();
}

}  // namespace dof
