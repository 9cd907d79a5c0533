#pragma once

#include "dof/common.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace dof {

inline Vec4 quat_from_matrix(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return {q.w(), q.x(), q.y(), q.z()};
}

inline Mat3 matrix_from_quat(const Vec4& q) {
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
}

inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  Eigen::Quaterniond r = Eigen::Quaterniond(a(0), a(1), a(2), a(3)) * Eigen::Quaterniond(b(0), b(1), b(2), b(3));
  return {r.w(), r.x(), r.y(), r.z()};
}

inline Vec4 quat_conjugate(const Vec4& q) { return {q(0), -q(1), -q(2), -q(3)}; }

// Representative with positive scalar part (first non-zero component positive
// when the scalar part vanishes), so q and -q map to the same vector.
inline Vec4 canonical(const Vec4& q) {
  for (int i = 0; i < 4; ++i)
    if (q(i) != 0) return q(i) > 0 ? q : Vec4(-q);
  return q;
}

// Pure-quaternion log; the rotation angle is twice the returned norm.
inline Vec3 quat_log(const Vec4& q) {
  require(std::abs(q.norm() - 1.0) < 1e-8, ErrorKind::parameter, "quat_log expects a unit quaternion");
  if (q(0) <= -1.0 + 1e-9) throw Error(ErrorKind::ambiguity, "log of a quaternion near -1 has no unique axis");
  Vec3 v = q.tail<3>();
  double s = v.norm();
  if (s == 0) return Vec3::Zero();
  return std::atan2(s, q(0)) * v / s;
}

inline Vec4 quat_exp(const Vec3& u) {
  require(u.allFinite(), ErrorKind::parameter, "quat_exp expects a finite vector");
  double phi = u.norm();
  if (phi == 0) return {1, 0, 0, 0};
  Vec4 q;
  q(0) = std::cos(phi);
  q.tail<3>() = std::sin(phi) * u / phi;
  return q;
}

inline double quat_angle(const Vec4& a, const Vec4& b) {
  double d = std::min(1.0, std::abs(a.dot(b)) / (a.norm() * b.norm()));
  return 2.0 * std::acos(d);
}

inline double rotation_angle(const Mat3& a, const Mat3& b) {
  Mat3 r = a.transpose() * b;
  double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  return std::acos(c);
}

// Dominant eigenvector of sum_k w_k q_k q_k^T, signed toward the first input.
inline Vec4 average_quaternions(const std::vector<Vec4>& qs, const std::vector<double>& weights = {}) {
  require(!qs.empty(), ErrorKind::parameter, "average of zero quaternions");
  require(weights.empty() || weights.size() == qs.size(), ErrorKind::shape, "weight count mismatch");
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  for (std::size_t i = 0; i < qs.size(); ++i) m += (weights.empty() ? 1.0 : weights[i]) * qs[i] * qs[i].transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(m);
  Vec4 ev = es.eigenvalues();
  if (ev(3) - ev(2) <= 1e-9 * std::max(m.trace(), 1e-300))
    throw Error(ErrorKind::ambiguity, "dominant eigenvalue of the quaternion scatter is not simple");
  Vec4 q = es.eigenvectors().col(3).normalized();
  if (q.dot(qs.front()) < 0) q = -q;
  return q;
}

// Nearest rotation in the Frobenius sense.
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU(), v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0 ? -1.0 : 1.0;
  return u * d * v.transpose();
}

inline double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

inline Mat3 frame_from_columns(const Vec3& u, const Vec3& v, const Vec3& n) {
  Mat3 r;
  r.col(0) = u;
  r.col(1) = v;
  r.col(2) = n;
  return r;
}

}  // namespace dof
