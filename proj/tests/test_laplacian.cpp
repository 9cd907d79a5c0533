#include "dof/laplacian.hpp"
#include "dof/shapes.hpp"
#include "test_util.hpp"

#include <cstdio>

using namespace dof;

TEST(Laplacian, PlaneQuadraticGivesFour) {
  PointCloud c = shapes::plane_grid(50, 50, 0.01);
  LaplacianPair lap = build_laplacian(c);
  VecX f(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) f(i) = c.points[i].x() * c.points[i].x() + c.points[i].y() * c.points[i].y();
  VecX lf = (lap.C * f).cwiseQuotient(lap.M);
  double worst = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (std::abs(c.points[i].x()) > 0.2 || std::abs(c.points[i].y()) > 0.2) continue;
    worst = std::max(worst, std::abs(lf(i) - 4.0) / 4.0);
  }
  EXPECT_LT(worst, 0.10);
}

TEST(Laplacian, KernelSymmetryAndMass) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PointCloud c = shapes::random_blob(800, seed);
    LaplacianPair lap = build_laplacian(c);
    VecX ones = VecX::Ones(lap.size());
    EXPECT_LT((lap.C * ones).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(asymmetry(lap.C), 1e-9);
    EXPECT_GT(lap.M.minCoeff(), 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (int t = 0; t < 100; ++t) {
      VecX u(lap.size());
      for (auto& x : u) x = g(rng);
      EXPECT_LE(u.dot(lap.C * u), 1e-9 * u.squaredNorm());
    }
    for (int cidx = 0; cidx < lap.C.outerSize(); ++cidx)
      for (SparseMatrix::InnerIterator it(lap.C, cidx); it; ++it)
        if (it.row() != it.col()) EXPECT_GE(it.value(), 0.0);
  }
}

TEST(Laplacian, ConstantInKernel) {
  PointCloud c = shapes::fibonacci_sphere(1000);
  LaplacianPair lap = build_laplacian(c);
  VecX v = VecX::Constant(lap.size(), 3.7);
  EXPECT_LT((lap.C * v).cwiseAbs().maxCoeff(), 1e-9 * v.norm());
}

TEST(Laplacian, SphereFirstEigenvalue) {
  PointCloud c = shapes::fibonacci_sphere(5000);
  LaplacianPair lap = build_laplacian(c);
  VecX ev = low_spectrum(lap, 4);
  EXPECT_NEAR(ev(0), 0.0, 1e-6);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(ev(i), 2.0, 0.3);
}

TEST(Laplacian, RigidMotionInvariant) {
  PointCloud c = shapes::random_blob(600, 8);
  LaplacianPair a = build_laplacian(c);
  Mat3 r = test::random_rotation(9);
  PointCloud d = c;
  for (std::size_t i = 0; i < d.size(); ++i) {
    d.points[i] = r * d.points[i] + Vec3(0.3, -0.1, 2.0);
    d.normals[i] = r * d.normals[i];
  }
  LaplacianPair b = build_laplacian(d);
  EXPECT_LT((a.M - b.M).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(MatX(a.C - b.C).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Laplacian, IsolatedVertexIsConnectivityError) {
  PointCloud c;
  for (int i = 0; i < 10; ++i) {
    c.points.push_back(Vec3(0, 0, 0));
    c.normals.push_back(Vec3::UnitZ());
  }
  c.mean_spacing_h = 1.0;
  EXPECT_THROW(build_laplacian(c, {6}), ConnectivityError);
}

TEST(Laplacian, CollinearNeighbourhoodFallsBack) {
  PointCloud c = shapes::line_points(20, 0.01);
  c.normals.assign(c.size(), Vec3::UnitZ());
  LaplacianPair lap = build_laplacian(c);
  EXPECT_EQ(lap.diagnostics.fallback_vertices.size(), c.size());
  EXPECT_LT((lap.C * VecX::Ones(lap.size())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Laplacian, RequiresNormalsAndK) {
  PointCloud c = shapes::line_points(20, 0.01);
  EXPECT_THROW(build_laplacian(c), Error);
  c.normals.assign(c.size(), Vec3::UnitZ());
  EXPECT_THROW(build_laplacian(c, {4}), Error);
}

TEST(DirichletEnergy, Basics) {
  PointCloud c = shapes::plane_grid(20, 20, 0.01);
  LaplacianPair lap = build_laplacian(c);
  EXPECT_NEAR(dirichlet_energy(lap, VecX::Constant(lap.size(), 2.0)), 0.0, 1e-12);
  VecX x(lap.size());
  for (std::size_t i = 0; i < c.size(); ++i) x(i) = c.points[i].x();
  EXPECT_GT(dirichlet_energy(lap, x), 0.0);
  EXPECT_THROW(dirichlet_energy(lap, VecX::Zero(3)), Error);
}

TEST(LaplacianCache, RoundTripAndFingerprintCheck) {
  PointCloud c = shapes::random_blob(300, 2);
  LaplacianPair lap = build_laplacian(c);
  std::string path = ::testing::TempDir() + "lap_cache.bin";
  save_laplacian(path, lap);
  auto back = load_laplacian(path, lap.cloud_fingerprint);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->M, lap.M);
  EXPECT_EQ(MatX(back->C), MatX(lap.C));
  EXPECT_FALSE(load_laplacian(path, lap.cloud_fingerprint + 1).has_value());
  std::remove(path.c_str());
}
