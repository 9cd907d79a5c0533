#include "dof/rotation.hpp"
#include "test_util.hpp"

using namespace dof;

namespace {

Vec4 random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec4 q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized();
}

}  // namespace

TEST(QuatLogExp, Identity) { EXPECT_EQ(quat_log(Vec4(1, 0, 0, 0)), Vec3::Zero()); }

TEST(QuatLogExp, HalfTurnAboutX) {
  Vec4 q = quat_exp(Vec3(pi / 2, 0, 0));
  EXPECT_NEAR(q(0), 0.0, 1e-15);
  EXPECT_NEAR(q(1), 1.0, 1e-15);
  EXPECT_TRUE(matrix_from_quat(q).isApprox(Eigen::AngleAxisd(pi, Vec3::UnitX()).toRotationMatrix(), 1e-12));
}

TEST(QuatLogExp, RoundTrip) {
  std::mt19937_64 rng(1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec4 q = random_quat(rng);
    if (q(0) <= -1 + 1e-6) continue;
    Vec4 r = quat_exp(quat_log(q));
    worst = std::max(worst, std::min((r - q).norm(), (r + q).norm()));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(QuatLogExp, NearMinusOneIsAmbiguous) {
  try {
    quat_log(Vec4(-1, 0, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ambiguity);
  }
}

TEST(AverageQuaternions, Idempotent) {
  std::mt19937_64 rng(2);
  Vec4 q = random_quat(rng);
  EXPECT_LT((average_quaternions({q, q, q}) - q).norm(), 1e-12);
}

TEST(AverageQuaternions, DoubleCover) {
  std::mt19937_64 rng(3);
  Vec4 q = random_quat(rng);
  Vec4 a = average_quaternions({q, -q});
  EXPECT_LT(quat_angle(a, q), 1e-6);
  EXPECT_GE(a.dot(q), 0.0);
}

TEST(AverageQuaternions, OrthogonalHalfTurnsAreAmbiguous) {
  Vec4 qx(0, 1, 0, 0), qy(0, 0, 1, 0);
  try {
    average_quaternions({qx, qy});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ambiguity);
  }
}

TEST(AverageQuaternions, SignFlipInvariantExactly) {
  std::mt19937_64 rng(4);
  std::vector<Vec4> qs;
  for (int i = 0; i < 20; ++i) qs.push_back(random_quat(rng));
  Mat3 r = matrix_from_quat(average_quaternions(qs));
  for (std::size_t i = 0; i < qs.size(); i += 3) qs[i] = -qs[i];
  EXPECT_EQ(matrix_from_quat(average_quaternions(qs)), r);
}

// Independent oracle: refined random search on q^T M q.
TEST(AverageQuaternions, MatchesRandomSearch) {
  std::mt19937_64 rng(5);
  for (int set = 0; set < 3; ++set) {
    std::vector<Vec4> qs;
    for (int i = 0; i < 100; ++i) qs.push_back(random_quat(rng));
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    for (const auto& q : qs) m += q * q.transpose();
    Vec4 best = test::random_search_max(m, 100 + set, 200000);
    Vec4 avg = average_quaternions(qs);
    EXPECT_GE(avg.dot(m * avg), best.dot(m * best) - 1e-12);
    EXPECT_LT(quat_angle(avg, best) * 180 / pi, 0.5);
  }
}

TEST(NearestRotation, ProjectsToSO3) {
  Mat3 m;
  m << 1, 0.1, 0, 0.05, 1.1, 0.2, 0, -0.1, 0.9;
  Mat3 r = nearest_rotation(m);
  EXPECT_LT(orthonormality_error(r), 1e-12);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
}
