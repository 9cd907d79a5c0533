#include "dof/point_cloud.hpp"
#include "dof/shapes.hpp"
#include "test_util.hpp"

#include <set>
#include <sstream>

using namespace dof;

TEST(LoadPointCloud, TetrahedronXyz) {
  std::istringstream in("0 0 0\n1 0 0\n0 1 0\n0 0 1\n");
  PointCloud c = load_point_cloud(in, CloudFormat::xyz);
  EXPECT_EQ(c.size(), 4u);
  EXPECT_FALSE(c.has_normals());
}

TEST(LoadPointCloud, NanIsFormatErrorWithLine) {
  std::istringstream in("0 0 0\n1 0 0\n# comment\n0 nan 0\n0 0 1\n");
  try {
    load_point_cloud(in, CloudFormat::xyz);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(LoadPointCloud, TooFewPointsIsSizeError) {
  std::istringstream in("0 0 0\n1 0 0\n");
  try {
    load_point_cloud(in, CloudFormat::xyz);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size);
  }
}

TEST(LoadPointCloud, XyzWithNormals) {
  std::istringstream in("0 0 0 0 0 2\n1 0 0 0 0 1\n0 1 0 0 0 1\n0 0 1 1 0 0\n");
  PointCloud c = load_point_cloud(in, CloudFormat::xyz);
  ASSERT_TRUE(c.has_normals());
  EXPECT_NEAR(c.normals[0].z(), 1.0, 1e-15);
}

TEST(LoadPointCloud, PlyAscii) {
  std::istringstream in(
      "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
      "property float nx\nproperty float ny\nproperty float nz\nelement face 1\n"
      "property list uchar int vertex_indices\nend_header\n"
      "0 0 0 0 0 1\n1 0 0 0 0 1\n0 1 0 0 0 1\n0 0 1 0 0 1\n3 0 1 2\n");
  PointCloud c = load_point_cloud(in, CloudFormat::ply_ascii);
  EXPECT_EQ(c.size(), 4u);
  EXPECT_TRUE(c.has_normals());
  EXPECT_EQ(c.points[3], Vec3(0, 0, 1));
}

TEST(LoadPointCloud, RoundTripXyz) {
  PointCloud c = shapes::fibonacci_sphere(50);
  std::stringstream ss;
  write_xyz(ss, c);
  PointCloud d = load_point_cloud(ss, CloudFormat::xyz);
  ASSERT_EQ(d.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(d.points[i], c.points[i]);
}

TEST(VoxelDownsample, DuplicatesCollapse) {
  PointCloud c;
  c.points = {Vec3(0.1, 0.1, 0.1), Vec3(0.1, 0.1, 0.1)};
  EXPECT_EQ(voxel_downsample(c, 0.001).size(), 1u);
}

TEST(VoxelDownsample, SeparatedBins) {
  PointCloud c;
  c.points = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_EQ(voxel_downsample(c, 0.003).size(), 2u);
}

TEST(VoxelDownsample, RejectsNonPositiveVoxel) {
  PointCloud c;
  c.points = {Vec3(0, 0, 0)};
  EXPECT_THROW(voxel_downsample(c, 0.0), Error);
}

TEST(VoxelDownsample, OnePointPerVoxelAndIdempotent) {
  PointCloud c;
  c.points = test::random_points(20000, 3, 0.05);
  PointCloud d = voxel_downsample(c, 0.003);
  std::set<std::tuple<long, long, long>> bins;
  for (const auto& p : d.points)
    bins.insert({std::lround(std::floor(p.x() / 0.003)), std::lround(std::floor(p.y() / 0.003)),
                 std::lround(std::floor(p.z() / 0.003))});
  EXPECT_EQ(bins.size(), d.size());
  PointCloud e = voxel_downsample(d, 0.003);
  ASSERT_EQ(e.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(e.points[i], d.points[i]);
}

TEST(EstimateNormals, PlaneTowardViewpoint) {
  PointCloud c = shapes::plane_grid(20, 20, 0.01);
  c.normals.clear();
  auto est = estimate_normals(c, 8, Vec3(0, 0, 1));
  for (const auto& n : est.cloud.normals) EXPECT_LT((n - Vec3::UnitZ()).norm(), 1e-3);
  EXPECT_TRUE(est.degenerate.empty());
}

TEST(EstimateNormals, SphereTopCapOutward) {
  PointCloud c = shapes::fibonacci_sphere(10000);
  PointCloud bare;
  bare.points = c.points;
  auto est = estimate_normals(bare, 16, Vec3(0, 0, 10));
  double worst = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.points[i].z() > 0.2) worst = std::max(worst, test::angle_deg(est.cloud.normals[i], c.normals[i]));
  EXPECT_LT(worst, 5.0);
}

TEST(EstimateNormals, OriginViewpointPointsInward) {
  PointCloud c = shapes::fibonacci_sphere(2000);
  PointCloud bare;
  bare.points = c.points;
  auto est = estimate_normals(bare, 16, Vec3::Zero());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT(est.cloud.normals[i].dot(c.normals[i]), 0.0);
}

TEST(EstimateNormals, CollinearIsDegenerate) {
  PointCloud c = shapes::line_points(5, 0.1);
  auto est = estimate_normals(c, 3, Vec3(0, 0, 1));
  EXPECT_EQ(est.degenerate.size(), 5u);
}

TEST(EstimateNormals, RigidRotationInvariant) {
  PointCloud c;
  c.points = shapes::ellipsoid(0.05, 0.03, 0.04, 0.004).points;
  Vec3 view(0.3, 0.2, 1.0);
  auto a = estimate_normals(c, 12, view);
  Mat3 r = test::random_rotation(5);
  Vec3 t(0.1, -0.3, 0.2);
  PointCloud d = c;
  for (auto& p : d.points) p = r * p + t;
  auto b = estimate_normals(d, 12, r * view + t);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LT((b.cloud.normals[i] - r * a.cloud.normals[i]).norm(), 1e-6);
}

TEST(MeanSpacing, UnitLine) {
  PointCloud c = shapes::line_points(10, 1.0);
  EXPECT_DOUBLE_EQ(mean_spacing(c, 1), 1.0);
  EXPECT_TRUE(c.mean_spacing_h.has_value());
}

TEST(MeanSpacing, TwoPoints) {
  PointCloud c;
  c.points = {Vec3(0, 0, 0), Vec3(2, 0, 0)};
  EXPECT_DOUBLE_EQ(compute_mean_spacing(c, 1), 2.0);
}

TEST(MeanSpacing, MatchesBruteForce) {
  PointCloud c;
  c.points = test::random_points(1000, 21);
  for (int k : {1, 6}) {
    double total = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::vector<double> d;
      for (std::size_t j = 0; j < c.size(); ++j)
        if (j != i) d.push_back((c.points[i] - c.points[j]).norm());
      std::sort(d.begin(), d.end());
      double s = 0;
      for (int m = 0; m < k; ++m) s += d[m];
      total += s / k;
    }
    EXPECT_NEAR(compute_mean_spacing(c, k), total / c.size(), 1e-12);
  }
}
